#include "steerkt/dumpio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

namespace steerkt {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

bool valid_kind(std::uint32_t k) {
    return k == static_cast<std::uint32_t>(DumpKind::activations) || k == static_cast<std::uint32_t>(DumpKind::sae) ||
           k == static_cast<std::uint32_t>(DumpKind::model);
}

// rows*cols with overflow and cap checks
std::uint64_t checked_elements(std::uint64_t rows, std::uint64_t cols, std::uint64_t cap) {
    if (cols != 0 && rows > cap / cols)
        throw std::runtime_error(fmt::format("dump dims {}x{} exceed element cap {}", rows, cols, cap));
    std::uint64_t n = rows * cols;
    if (n > cap) throw std::runtime_error(fmt::format("dump dims {}x{} exceed element cap {}", rows, cols, cap));
    return n;
}

} // namespace

const char* kind_name(DumpKind k) {
    switch (k) {
    case DumpKind::activations: return "activations";
    case DumpKind::sae: return "sae";
    case DumpKind::model: return "model";
    }
    return "unknown";
}

ActivationDump make_dump(DumpKind kind, std::uint32_t layer, const Matrix& values,
                         std::optional<std::vector<std::uint8_t>> mask) {
    ActivationDump d;
    d.header.kind = kind;
    d.header.layer = layer;
    d.header.rows = values.rows;
    d.header.cols = values.cols;
    d.header.has_mask = mask ? 1 : 0;
    d.values = values;
    d.mask = std::move(mask);
    return d;
}

std::vector<std::uint8_t> encode_dump(const ActivationDump& d, std::uint64_t element_cap) {
    const auto& h = d.header;
    if (h.version != kDumpVersion) throw std::invalid_argument(fmt::format("unsupported dump version {}", h.version));
    if (!valid_kind(static_cast<std::uint32_t>(h.kind))) throw std::invalid_argument("invalid dump kind");
    if (h.dtype != kDtypeF32) throw std::invalid_argument(fmt::format("unsupported dtype {}", h.dtype));
    if (h.rows != d.values.rows || h.cols != d.values.cols)
        throw std::invalid_argument(fmt::format("header dims {}x{} disagree with payload {}x{}", h.rows, h.cols,
                                                d.values.rows, d.values.cols));
    if ((h.has_mask != 0) != d.mask.has_value()) throw std::invalid_argument("mask flag disagrees with mask presence");
    if (h.has_mask > 1) throw std::invalid_argument("mask flag must be 0 or 1");
    std::uint64_t n = checked_elements(h.rows, h.cols, element_cap);
    if (d.mask) {
        if (d.mask->size() != h.rows)
            throw std::invalid_argument(fmt::format("mask has {} bytes for {} rows", d.mask->size(), h.rows));
        for (auto b : *d.mask)
            if (b > 1) throw std::invalid_argument("mask byte not in {0,1}");
    }

    std::vector<std::uint8_t> out;
    out.reserve(kDumpHeaderSize + n * 4 + (d.mask ? d.mask->size() : 0));
    out.insert(out.end(), kDumpMagic, kDumpMagic + 8);
    put_u32(out, h.version);
    put_u32(out, static_cast<std::uint32_t>(h.kind));
    put_u32(out, h.layer);
    put_u32(out, 0); // reserved, keeps the u64 dims 8-byte aligned
    put_u64(out, h.rows);
    put_u64(out, h.cols);
    put_u32(out, h.dtype);
    put_u32(out, h.has_mask);
    for (double x : d.values.data) {
        float f = static_cast<float>(x);
        if (!std::isfinite(f)) throw std::invalid_argument("dump payload contains a non-finite value");
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    if (d.mask) out.insert(out.end(), d.mask->begin(), d.mask->end());
    return out;
}

ActivationDump decode_dump(const std::vector<std::uint8_t>& bytes, std::uint64_t element_cap) {
    if (bytes.size() < kDumpHeaderSize)
        throw std::runtime_error(fmt::format("truncated dump: {} bytes, header needs {}", bytes.size(), kDumpHeaderSize));
    const std::uint8_t* p = bytes.data();
    if (std::memcmp(p, kDumpMagic, 8) != 0) throw std::runtime_error("bad magic");
    ActivationDump d;
    auto& h = d.header;
    h.version = get_u32(p + 8);
    if (h.version != kDumpVersion) throw std::runtime_error(fmt::format("unsupported version {}", h.version));
    std::uint32_t kind = get_u32(p + 12);
    if (!valid_kind(kind)) throw std::runtime_error(fmt::format("unknown kind 0x{:08x}", kind));
    h.kind = static_cast<DumpKind>(kind);
    h.layer = get_u32(p + 16);
    if (get_u32(p + 20) != 0) throw std::runtime_error("reserved header field is nonzero");
    h.rows = get_u64(p + 24);
    h.cols = get_u64(p + 32);
    h.dtype = get_u32(p + 40);
    if (h.dtype != kDtypeF32) throw std::runtime_error(fmt::format("unsupported dtype {}", h.dtype));
    h.has_mask = get_u32(p + 44);
    if (h.has_mask > 1) throw std::runtime_error(fmt::format("invalid mask flag {}", h.has_mask));

    std::uint64_t n = checked_elements(h.rows, h.cols, element_cap);
    std::uint64_t expected = kDumpHeaderSize + n * 4 + (h.has_mask ? h.rows : 0);
    if (bytes.size() < expected)
        throw std::runtime_error(fmt::format("truncated dump: {} bytes, expected {}", bytes.size(), expected));
    if (bytes.size() > expected)
        throw std::runtime_error(fmt::format("trailing bytes in dump: {} bytes, expected {}", bytes.size(), expected));

    d.values = Matrix(h.rows, h.cols);
    const std::uint8_t* q = p + kDumpHeaderSize;
    for (std::uint64_t i = 0; i < n; ++i, q += 4) {
        float f = std::bit_cast<float>(get_u32(q));
        if (!std::isfinite(f)) throw std::runtime_error(fmt::format("non-finite payload value at element {}", i));
        d.values.data[i] = f;
    }
    if (h.has_mask) {
        d.mask = std::vector<std::uint8_t>(q, q + h.rows);
        for (auto b : *d.mask)
            if (b > 1) throw std::runtime_error(fmt::format("mask byte {} not in {{0,1}}", b));
    }
    return d;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    namespace fs = std::filesystem;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", tmp));
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error(fmt::format("write failed: {}", path));
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw std::runtime_error(fmt::format("cannot move dump into place at {}", path));
    }
}

void write_dump(const ActivationDump& d, const std::string& path, std::uint64_t element_cap) {
    // encode first: a cap or invariant violation throws before any file exists
    write_file_bytes(path, encode_dump(d, element_cap));
}

ActivationDump read_dump(const std::string& path, std::uint64_t element_cap) {
    auto bytes = read_file_bytes(path);
    try {
        return decode_dump(bytes, element_cap);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open manifest {}", path));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("malformed manifest {}: {}", path, e.what()));
    }
    if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array");
    std::vector<ManifestEntry> out;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("pair_id") || !e.contains("role") || !e.contains("layer") || !e.contains("file"))
            throw std::runtime_error("manifest entry needs pair_id, role, layer, file");
        ManifestEntry m;
        m.pair_id = e["pair_id"].is_string() ? e["pair_id"].get<std::string>() : e["pair_id"].dump();
        m.role = e["role"].get<std::string>();
        if (m.role != "md" && m.role != "pl")
            throw std::runtime_error(fmt::format("manifest role must be md or pl, got '{}'", m.role));
        m.layer = e["layer"].get<int>();
        m.file = e["file"].get<std::string>();
        out.push_back(std::move(m));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"pair_id", e.pair_id}, {"role", e.role}, {"layer", e.layer}, {"file", e.file}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write manifest {}", path));
    out << j.dump(2) << "\n";
}

} // namespace steerkt
