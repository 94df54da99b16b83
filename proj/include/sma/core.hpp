#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sma {

// Shape/argument violations (dimension mismatch, bad index sets, bad config).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, divergence, failed numerical contracts.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed files: bad magic, wrong version, truncation.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Writes via a temp file in the same directory, then renames into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level();  // from SMA_LOG={error,info,debug}, default info
void log_msg(LogLevel level, const std::string& msg);

// Dense row-major matrix. Storage is float32; reductions accumulate in
// double with a fixed sequential order so repeated runs are bit-identical.
class Matrix {
   public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    std::vector<double> to_double() const;

    bool all_finite() const;
    // Throws NumericError naming `what` if any entry is NaN/Inf.
    void require_finite(const char* what) const;

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

   private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<float> data_;
};

// Standard product with sequential accumulation over the inner dimension
// (double accumulator, cast once to float). Bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Each row divided by max(||row||2, eps); zero rows stay (near) zero.
Matrix row_l2_normalize(const Matrix& m, double eps = 1e-12);

// tau * log sum exp(v_i / tau), max-subtraction trick. The exponent terms are
// summed largest-first, which also makes the value exactly invariant to
// permutations of v.
double logsumexp(std::span<const double> v, double tau);

// -logsumexp(-v, tau): smooth minimum, in [min(v) - tau*log n, min(v)].
double smoothmin(std::span<const double> v, double tau);

// xoshiro256** seeded through splitmix64. Same seed gives the same u64
// sequence on every platform; float draws depend only on that sequence
// and on libm (log/cos/sqrt for normals).
class Rng {
   public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                          // [0, 1)
    double uniform(double lo, double hi);      // [lo, hi)
    double normal();                           // Box-Muller
    std::uint64_t below(std::uint64_t bound);  // [0, bound)

    // Independent deterministic substream for a named purpose.
    Rng fork(std::uint64_t tag) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

   private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sma
