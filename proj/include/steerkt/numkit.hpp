#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace steerkt {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    static Matrix identity(std::size_t n);
    bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T, the common case for weight matrices stored as (out x in).
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix relu(const Matrix& m);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);
double cosine(std::span<const double> u, std::span<const double> v);

// True when every entry is finite.
bool all_finite(std::span<const double> v);

// Rounds every entry to the nearest 32-bit float (keeps weights exactly serializable).
void round_to_f32(std::span<double> v);
inline void round_to_f32(Matrix& m) { round_to_f32(std::span<double>(m.data)); }

// xoshiro256** seeded through splitmix64. split(k) derives an independent stream.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64();
    double uniform();                                   // [0, 1), 53 bits
    std::uint64_t below(std::uint64_t n);               // [0, n), unbiased
    std::int64_t range(std::int64_t lo, std::int64_t hi); // inclusive
    double normal();                                    // standard normal, polar method
    SeededRng split(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Worker count: hardware concurrency, capped by STEERKT_THREADS when set.
std::size_t worker_count();

// Evaluates f(i) for i in [0, n) on up to worker_count() threads. Results are
// stored by index, so the output never depends on scheduling. The exception of
// the lowest failing index is rethrown.
template <class F>
auto parallel_map(std::size_t n, F&& f) -> std::vector<decltype(f(std::size_t{0}))> {
    using R = decltype(f(std::size_t{0}));
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errs(n);
    std::size_t nw = std::min(worker_count(), n);
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < n; i += nw) {
            try {
                out[i] = f(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    if (nw <= 1) {
        if (n > 0) work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    return out;
}

} // namespace steerkt
