#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steerkt/numkit.hpp"

namespace steerkt {

inline constexpr char kDumpMagic[8] = {'S', 'T', 'E', 'E', 'R', 'K', 'T', '\0'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;
inline constexpr std::uint32_t kNoLayer = 0xFFFFFFFFu;
inline constexpr std::size_t kDumpHeaderSize = 48;
inline constexpr std::uint64_t kDefaultElementCap = std::uint64_t{1} << 30;

// Kind codes are four ASCII bytes read as a little-endian u32. Every pair of
// codes differs in all four bytes, so no single corrupted byte turns one valid
// kind into another.
enum class DumpKind : std::uint32_t {
    activations = 0x53544341u, // "ACTS"
    sae = 0x57454153u,         // "SAEW"
    model = 0x4c444f4du,       // "MODL"
};

const char* kind_name(DumpKind k);

struct DumpHeader {
    std::uint32_t version = kDumpVersion;
    DumpKind kind = DumpKind::activations;
    std::uint32_t layer = kNoLayer;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::uint32_t dtype = kDtypeF32;
    std::uint32_t has_mask = 0;
    bool operator==(const DumpHeader&) const = default;
};

struct ActivationDump {
    DumpHeader header;
    Matrix values;                         // rows x cols, f32-representable after a read
    std::optional<std::vector<std::uint8_t>> mask; // one byte per row, 0/1

    bool operator==(const ActivationDump&) const = default;
};

// Byte image of a dump (header, payload, mask). Validates invariants first.
std::vector<std::uint8_t> encode_dump(const ActivationDump& d, std::uint64_t element_cap = kDefaultElementCap);
ActivationDump decode_dump(const std::vector<std::uint8_t>& bytes, std::uint64_t element_cap = kDefaultElementCap);

// Writes via a temporary file and rename, so a failed write leaves no partial file.
void write_dump(const ActivationDump& d, const std::string& path, std::uint64_t element_cap = kDefaultElementCap);
ActivationDump read_dump(const std::string& path, std::uint64_t element_cap = kDefaultElementCap);

ActivationDump make_dump(DumpKind kind, std::uint32_t layer, const Matrix& values,
                         std::optional<std::vector<std::uint8_t>> mask = std::nullopt);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Manifest: JSON array of {pair_id, role: "md"|"pl", layer, file}.
struct ManifestEntry {
    std::string pair_id;
    std::string role;
    int layer = 0;
    std::string file;
    bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

} // namespace steerkt
