#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "synex/types.hpp"
#include "synex/vec.hpp"

// Soft-margin SVM trained by SMO on the dual problem, with Platt scaling for
// probability outputs. Small and deterministic: no randomness, kernel matrix
// held in memory (training sets here are |E0| * (K+1) points).

namespace synex {

struct SvmParams {
    enum class Kernel { rbf, linear };
    Kernel kernel = Kernel::rbf;
    double C = 1.0;
    // RBF width; <= 0 picks 1 / (n_features * variance of all feature values).
    double gamma = 0.0;
    double kkt_tol = 1e-3;
    std::size_t max_iterations = 20000; // outer SMO sweeps guard
};

class SvmMember {
public:
    SvmParams::Kernel kernel = SvmParams::Kernel::rbf;
    double gamma = 1.0;
    std::vector<std::vector<double>> support_vectors;
    std::vector<double> dual_coef; // alpha_i * y_i per support vector
    double bias = 0.0;
    double platt_a = -1.0;
    double platt_b = 0.0;

    double kernel_value(std::span<const double> a, std::span<const double> b) const {
        if (kernel == SvmParams::Kernel::linear) return dot(a, b);
        double d2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double diff = a[i] - b[i];
            d2 += diff * diff;
        }
        return std::exp(-gamma * d2);
    }

    double decision(std::span<const double> x) const {
        double f = bias;
        for (std::size_t i = 0; i < support_vectors.size(); ++i)
            f += dual_coef[i] * kernel_value(support_vectors[i], x);
        return f;
    }

    // Platt-calibrated probability P(y=1|x) = 1/(1+exp(a*f+b)), strictly
    // inside (0,1).
    double probability(std::span<const double> x) const {
        const double z = platt_a * decision(x) + platt_b;
        if (z >= 0) {
            const double e = std::exp(-z);
            return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(z));
    }

    bool operator==(const SvmMember& other) const {
        return kernel == other.kernel && gamma == other.gamma &&
               support_vectors == other.support_vectors && dual_coef == other.dual_coef &&
               bias == other.bias && platt_a == other.platt_a && platt_b == other.platt_b;
    }
};

namespace detail {

// Platt's sigmoid fit (Lin & Weng's numerically stable Newton iteration).
// Targets use the standard prior-corrected values so outputs never saturate.
inline std::pair<double, double> fit_platt(const std::vector<double>& decision,
                                           const std::vector<int>& y) {
    const std::size_t n = decision.size();
    double n_pos = 0, n_neg = 0;
    for (int label : y) (label > 0 ? n_pos : n_neg) += 1;
    const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double t_neg = 1.0 / (n_neg + 2.0);

    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = y[i] > 0 ? t_pos : t_neg;

    double a = 0.0;
    double b = std::log((n_neg + 1.0) / (n_pos + 1.0));

    auto objective = [&](double pa, double pb) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = pa * decision[i] + pb;
            if (z >= 0)
                obj += target[i] * z + std::log(1.0 + std::exp(-z));
            else
                obj += (target[i] - 1.0) * z + std::log(1.0 + std::exp(z));
        }
        return obj;
    };

    double obj = objective(a, b);
    for (int iter = 0; iter < 100; ++iter) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = a * decision[i] + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d1 = target[i] - p;
            const double d2 = p * q;
            g1 += decision[i] * d1;
            g2 += d1;
            h11 += decision[i] * decision[i] * d2;
            h22 += d2;
            h21 += decision[i] * d2;
        }
        if (std::abs(g1) < 1e-10 && std::abs(g2) < 1e-10) break;

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double na = a + step * da, nb = b + step * db;
            const double nobj = objective(na, nb);
            if (nobj < obj + 1e-4 * step * gd) {
                a = na;
                b = nb;
                obj = nobj;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if (!moved) break;
    }
    return {a, b};
}

} // namespace detail

// Trains on labels in {0,1} (mapped to -1/+1 internally). The dual solver is
// deterministic; `rng_seed` keeps the trainer signature uniform with the other
// model trainers and is not consumed.
inline SvmMember train_svm(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                           const SvmParams& params, std::uint64_t /*rng_seed*/ = 0) {
    const std::size_t n = X.size();
    if (n < 2 || y.size() != n) throw ValidationError("svm train: need >= 2 labeled points");
    const std::size_t d = X[0].size();
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (X[i].size() != d) throw ValidationError("svm train: ragged feature matrix");
        (y[i] == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw ValidationError("svm train: need both labels");

    double gamma = params.gamma;
    if (gamma <= 0.0) {
        double mean = 0.0, var = 0.0;
        const double count = static_cast<double>(n * d);
        for (const auto& row : X)
            for (double v : row) mean += v;
        mean /= count;
        for (const auto& row : X)
            for (double v : row) var += (v - mean) * (v - mean);
        var /= count;
        gamma = var > 0 ? 1.0 / (static_cast<double>(d) * var) : 1.0 / static_cast<double>(d);
    }

    SvmMember model;
    model.kernel = params.kernel;
    model.gamma = gamma;

    std::vector<double> label(n);
    for (std::size_t i = 0; i < n; ++i) label[i] = y[i] == 1 ? 1.0 : -1.0;

    // Kernel matrix (training sets are small by construction).
    std::vector<std::vector<double>> K(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) K[i][j] = K[j][i] = model.kernel_value(X[i], X[j]);

    std::vector<double> alpha(n, 0.0);
    std::vector<double> err(n); // f(x_i) - y_i with f tracked incrementally
    for (std::size_t i = 0; i < n; ++i) err[i] = -label[i];
    double b = 0.0;
    const double C = params.C;
    const double tol = params.kkt_tol;
    const double eps = 1e-3; // minimal relative step, per the classic SMO recipe

    auto take_step = [&](std::size_t i1, std::size_t i2) -> bool {
        if (i1 == i2) return false;
        const double a1 = alpha[i1], a2 = alpha[i2];
        const double y1 = label[i1], y2 = label[i2];
        const double e1 = err[i1], e2 = err[i2];
        const double s = y1 * y2;
        double lo, hi;
        if (s < 0) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(C, C + a2 - a1);
        } else {
            lo = std::max(0.0, a2 + a1 - C);
            hi = std::min(C, a2 + a1);
        }
        if (lo >= hi) return false;
        const double eta = K[i1][i1] + K[i2][i2] - 2.0 * K[i1][i2];
        double a2_new;
        if (eta > eps) {
            a2_new = a2 + y2 * (e1 - e2) / eta;
            a2_new = std::clamp(a2_new, lo, hi);
        } else {
            // Flat direction: move to the bound that lowers the objective.
            // (decision here is sum + b, hence e - b for the kernel-only part)
            const double f1 = y1 * (e1 - b) - a1 * K[i1][i1] - s * a2 * K[i1][i2];
            const double f2 = y2 * (e2 - b) - s * a1 * K[i1][i2] - a2 * K[i2][i2];
            const double l1 = a1 + s * (a2 - lo);
            const double h1 = a1 + s * (a2 - hi);
            const double obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * K[i1][i1] +
                                  0.5 * lo * lo * K[i2][i2] + s * lo * l1 * K[i1][i2];
            const double obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * K[i1][i1] +
                                  0.5 * hi * hi * K[i2][i2] + s * hi * h1 * K[i1][i2];
            if (obj_lo < obj_hi - eps)
                a2_new = lo;
            else if (obj_lo > obj_hi + eps)
                a2_new = hi;
            else
                return false;
        }
        if (std::abs(a2_new - a2) < eps * (a2_new + a2 + eps)) return false;
        const double a1_new = a1 + s * (a2 - a2_new);

        const double b1 = b - e1 - y1 * (a1_new - a1) * K[i1][i1] - y2 * (a2_new - a2) * K[i1][i2];
        const double b2 = b - e2 - y1 * (a1_new - a1) * K[i1][i2] - y2 * (a2_new - a2) * K[i2][i2];
        double b_new;
        if (a1_new > 0 && a1_new < C)
            b_new = b1;
        else if (a2_new > 0 && a2_new < C)
            b_new = b2;
        else
            b_new = (b1 + b2) / 2.0;

        for (std::size_t k = 0; k < n; ++k)
            err[k] += y1 * (a1_new - a1) * K[i1][k] + y2 * (a2_new - a2) * K[i2][k] + (b_new - b);
        alpha[i1] = a1_new;
        alpha[i2] = a2_new;
        b = b_new;
        return true;
    };

    auto examine = [&](std::size_t i2) -> bool {
        const double y2 = label[i2], a2 = alpha[i2], e2 = err[i2];
        const double r2 = e2 * y2;
        if (!((r2 < -tol && a2 < C) || (r2 > tol && a2 > 0))) return false;

        // Second-choice heuristic: maximize |e1 - e2| over non-bound points.
        std::size_t best = n;
        double best_gap = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (alpha[k] <= 0 || alpha[k] >= C) continue;
            const double gap = std::abs(err[k] - e2);
            if (gap > best_gap) {
                best_gap = gap;
                best = k;
            }
        }
        if (best < n && take_step(best, i2)) return true;
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t k = (i2 + 1 + off) % n;
            if (alpha[k] > 0 && alpha[k] < C && take_step(k, i2)) return true;
        }
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t k = (i2 + 1 + off) % n;
            if (take_step(k, i2)) return true;
        }
        return false;
    };

    std::size_t iterations = 0;
    std::size_t num_changed = 0;
    bool examine_all = true;
    while (num_changed > 0 || examine_all) {
        if (++iterations > params.max_iterations)
            throw std::runtime_error("svm train: SMO did not converge after " +
                                     std::to_string(iterations - 1) + " sweeps");
        num_changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!examine_all && (alpha[i] <= 0 || alpha[i] >= C)) continue;
            num_changed += examine(i);
        }
        if (examine_all)
            examine_all = false;
        else if (num_changed == 0)
            examine_all = true;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0) {
            model.support_vectors.push_back(X[i]);
            model.dual_coef.push_back(alpha[i] * label[i]);
        }
    }
    model.bias = b;

    std::vector<double> decisions(n);
    for (std::size_t i = 0; i < n; ++i) decisions[i] = err[i] + label[i]; // f(x_i)
    auto [pa, pb] = detail::fit_platt(decisions, y);
    model.platt_a = pa;
    model.platt_b = pb;
    return model;
}

} // namespace synex
