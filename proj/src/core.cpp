#include "sma/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace sma {

LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* env = std::getenv("SMA_LOG");
        if (env == nullptr) return LogLevel::Info;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return lvl;
}

void log_msg(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static const char* names[] = {"error", "info", "debug"};
    std::fprintf(stderr, "[sma][%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " != rows*cols " + std::to_string(rows_ * cols_));
    }
}

std::vector<double> Matrix::to_double() const {
    return std::vector<double>(data_.begin(), data_.end());
}

bool Matrix::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::require_finite(const char* what) const {
    if (!all_finite()) {
        throw NumericError(std::string(what) + ": non-finite entry");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    out.require_finite("matmul result");
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

Matrix row_l2_normalize(const Matrix& m, double eps) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double v = m.at(i, j);
            sq += v * v;
        }
        const double denom = std::max(std::sqrt(sq), eps);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out.at(i, j) = static_cast<float>(m.at(i, j) / denom);
        }
    }
    out.require_finite("row_l2_normalize result");
    return out;
}

double logsumexp(std::span<const double> v, double tau) {
    if (v.empty()) throw ShapeError("logsumexp: empty vector");
    if (!(tau > 0.0)) throw ShapeError("logsumexp: tau must be positive");
    std::vector<double> scaled(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) scaled[i] = v[i] / tau;
    std::sort(scaled.begin(), scaled.end(), std::greater<double>());
    const double m = scaled.front();
    double acc = 0.0;
    for (double s : scaled) acc += std::exp(s - m);
    return tau * (m + std::log(acc));
}

double smoothmin(std::span<const double> v, double tau) {
    std::vector<double> neg(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) neg[i] = -v[i];
    return -logsumexp(neg, tau);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_normal_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw ShapeError("Rng::below: bound must be positive");
    // Rejection sampling keeps the draw unbiased and portable.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
}

Rng Rng::fork(std::uint64_t tag) const {
    std::uint64_t mix = seed_;
    std::uint64_t a = splitmix64(mix);
    mix ^= tag * 0x9E3779B97F4A7C15ULL;
    std::uint64_t b = splitmix64(mix);
    return Rng(a ^ rotl(b, 31) ^ tag);
}

}  // namespace sma
