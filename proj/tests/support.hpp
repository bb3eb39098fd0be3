#pragma once

// Shared test helpers: central-difference gradient checking and random
// parameter construction.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <unordered_map>
#include <vector>

#include <pfcvr/autograd.hpp>
#include <pfcvr/rng.hpp>

namespace pfcvr_test {

using pfcvr::Mat;
using pfcvr::Param;
using pfcvr::Rng;

// Checks every analytic gradient against a central difference of the same
// forward function rebuilt on a fresh tape per evaluation.
struct GradCheck {
    std::vector<Param*> params;
    std::function<pfcvr::ag::Var(pfcvr::ag::Tape&)> fn;

    void run(double tol = 1e-6, double h = 1e-5) {
        pfcvr::ag::Tape t;
        pfcvr::ag::Var out = fn(t);
        REQUIRE(out->val.rows == 1);
        REQUIRE(out->val.cols == 1);
        t.backward(out);
        std::unordered_map<Param*, Mat> grads;
        for (const auto& [p, node] : t.bound_params()) grads[p] = node->grad;

        auto value = [&]() {
            pfcvr::ag::Tape fresh;
            return fn(fresh)->val(0, 0);
        };
        for (Param* p : params) {
            REQUIRE(grads.count(p) == 1);
            const Mat& g = grads[p];
            for (int r = 0; r < p->value.rows; ++r) {
                for (int c = 0; c < p->value.cols; ++c) {
                    double keep = p->value(r, c);
                    double step = h * std::max(1.0, std::abs(keep));
                    p->value(r, c) = keep + step;
                    double fp = value();
                    p->value(r, c) = keep - step;
                    double fm = value();
                    p->value(r, c) = keep;
                    double num = (fp - fm) / (2.0 * step);
                    double an = g(r, c);
                    double denom = std::max({1.0, std::abs(an), std::abs(num)});
                    INFO(p->name << "(" << r << "," << c << "): analytic " << an << " numeric "
                                 << num);
                    REQUIRE(std::abs(an - num) <= tol * denom);
                }
            }
        }
    }
};

inline Param make_param(Rng& rng, const std::string& name, int r, int c, double std_dev = 1.0) {
    return Param(name, pfcvr::random_normal_mat(rng, r, c, std_dev));
}

inline Param make_positive_param(Rng& rng, const std::string& name, int r, int c) {
    Mat m = pfcvr::random_normal_mat(rng, r, c, 1.0);
    for (double& v : m.data) v = std::abs(v) + 0.5;
    return Param(name, m);
}

// Reduce an arbitrary matrix to a scalar through fixed weights so the full
// Jacobian participates in the check.
inline pfcvr::ag::Var reduce(pfcvr::ag::Tape& t, pfcvr::ag::Var x, const Mat& w) {
    return pfcvr::ag::sum_all(pfcvr::ag::mul(x, t.constant(w)));
}

}  // namespace pfcvr_test
