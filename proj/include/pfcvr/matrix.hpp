#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pfcvr {

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Dense row-major double matrix. All model state and activations use this;
// Eigen maps back the matmul kernels only.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        check(r >= 0 && c >= 0, "Mat: negative dimension");
    }
    Mat(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        check(data.size() == static_cast<size_t>(r) * c, "Mat: data size mismatch");
    }

    static Mat full(int r, int c, double v) {
        Mat m(r, c);
        std::fill(m.data.begin(), m.data.end(), v);
        return m;
    }
    static Mat scalar(double v) { return full(1, 1, v); }

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    void add_inplace(const Mat& o) {
        check(same_shape(o), "Mat::add_inplace: shape mismatch");
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    }
};

namespace detail {
using EMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace detail

// out (+)= a * b
inline void matmul_into(Mat& out, const Mat& a, const Mat& b, bool accumulate) {
    check(a.cols == b.rows, "matmul: inner dimension mismatch (" + std::to_string(a.cols) +
                                " vs " + std::to_string(b.rows) + ")");
    check(out.rows == a.rows && out.cols == b.cols, "matmul: output shape mismatch");
    detail::CEMap ma(a.data.data(), a.rows, a.cols), mb(b.data.data(), b.rows, b.cols);
    detail::EMap mo(out.data.data(), out.rows, out.cols);
    if (accumulate)
        mo.noalias() += ma * mb;
    else
        mo.noalias() = ma * mb;
}

// out (+)= a * b^T
inline void matmul_nt_into(Mat& out, const Mat& a, const Mat& b, bool accumulate) {
    check(a.cols == b.cols, "matmul_nt: inner dimension mismatch");
    check(out.rows == a.rows && out.cols == b.rows, "matmul_nt: output shape mismatch");
    detail::CEMap ma(a.data.data(), a.rows, a.cols), mb(b.data.data(), b.rows, b.cols);
    detail::EMap mo(out.data.data(), out.rows, out.cols);
    if (accumulate)
        mo.noalias() += ma * mb.transpose();
    else
        mo.noalias() = ma * mb.transpose();
}

// out (+)= a^T * b
inline void matmul_tn_into(Mat& out, const Mat& a, const Mat& b, bool accumulate) {
    check(a.rows == b.rows, "matmul_tn: inner dimension mismatch");
    check(out.rows == a.cols && out.cols == b.cols, "matmul_tn: output shape mismatch");
    detail::CEMap ma(a.data.data(), a.rows, a.cols), mb(b.data.data(), b.rows, b.cols);
    detail::EMap mo(out.data.data(), out.rows, out.cols);
    if (accumulate)
        mo.noalias() += ma.transpose() * mb;
    else
        mo.noalias() = ma.transpose() * mb;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.cols);
    matmul_into(out, a, b, false);
    return out;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
    return out;
}

inline double l2_norm(const double* v, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

// FNV-1a, used to fingerprint serialized configs.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace pfcvr
