#include "arrayem/conditional.hpp"

#include <cmath>
#include <numbers>

namespace arrayem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kPivotFloor = 1e-13;

// Multi-indices of a list of cells, one row per cell.
Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cell_indices(const Shape& shape,
                                                                                  const std::vector<Index>& cells) {
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> idx(static_cast<Index>(cells.size()),
                                                                             shape.order());
    for (Index r = 0; r < idx.rows(); ++r) {
        shape.unravel(cells[static_cast<std::size_t>(r)], std::span<Index>(idx.row(r).data(), idx.cols()));
    }
    return idx;
}

using IndexRows = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Block of prod_k F_k(a_k, b_k) for rows a in `rows` and columns b in `cols`.
Eigen::MatrixXd kron_block(const std::vector<const Eigen::MatrixXd*>& f, const IndexRows& rows, const IndexRows& cols,
                           bool symmetric) {
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    const Index order = static_cast<Index>(f.size());
    for (Index b = 0; b < cols.rows(); ++b) {
        const Index a0 = symmetric ? b : 0;
        for (Index a = a0; a < rows.rows(); ++a) {
            double v = (*f[0])(rows(a, 0), cols(b, 0));
            for (Index k = 1; k < order; ++k) v *= (*f[static_cast<std::size_t>(k)])(rows(a, k), cols(b, k));
            out(a, b) = v;
        }
    }
    if (symmetric) out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
    return out;
}

void check_pivots(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& m, Index observation,
                  const char* what) {
    if (llt.info() != Eigen::Success) throw ConditioningError(observation, std::string(what) + " is not positive definite");
    const double scale = m.diagonal().cwiseAbs().maxCoeff();
    const double min_pivot = llt.matrixLLT().diagonal().array().square().minCoeff();
    if (!(min_pivot > kPivotFloor * scale)) throw ConditioningError(observation, std::string(what) + " is numerically singular");
}

ConditionalMoments via_covariance(const PartialArray& obs, const ArrayNormalModel& model, bool with_covariance,
                                  const std::vector<Index>& observed, const std::vector<Index>& missing,
                                  Index observation) {
    const Shape& shape = model.shape();
    std::vector<const Eigen::MatrixXd*> sig;
    for (const auto& f : model.covariance.factors()) sig.push_back(&f.sigma());
    const IndexRows obs_idx = cell_indices(shape, observed);
    const IndexRows mis_idx = cell_indices(shape, missing);
    const Index n_o = obs_idx.rows();

    ConditionalMoments out{obs.values, missing, {}, 0.0};
    const auto& mu = model.mean.values();

    Eigen::VectorXd alpha;
    Eigen::MatrixXd v;  // Lambda_MO L^{-T}
    if (n_o > 0) {
        const Eigen::MatrixXd oo = kron_block(sig, obs_idx, obs_idx, true);
        Eigen::LLT<Eigen::MatrixXd> llt(oo);
        check_pivots(llt, oo, observation, "observed-block covariance");
        Eigen::VectorXd d(n_o);
        for (Index r = 0; r < n_o; ++r) {
            const Index c = observed[static_cast<std::size_t>(r)];
            d[r] = obs.values[c] - mu[c];
        }
        const auto lower = llt.matrixL();
        alpha = lower.solve(d);
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        out.loglik = -0.5 * (static_cast<double>(n_o) * kLog2Pi + log_det + alpha.squaredNorm());
        if (!missing.empty()) {
            Eigen::MatrixXd om = kron_block(sig, obs_idx, mis_idx, false);
            lower.solveInPlace(om);
            v = om.transpose();
        }
    }
    if (missing.empty()) return out;

    for (std::size_t r = 0; r < missing.size(); ++r) {
        const Index c = missing[r];
        out.mean[c] = mu[c] + (n_o > 0 ? v.row(static_cast<Index>(r)).dot(alpha) : 0.0);
    }
    if (with_covariance) {
        out.covariance = kron_block(sig, mis_idx, mis_idx, true);
        if (n_o > 0) {
            out.covariance.selfadjointView<Eigen::Lower>().rankUpdate(v, -1.0);
            out.covariance.triangularView<Eigen::StrictlyUpper>() = out.covariance.transpose();
        }
    }
    return out;
}

ConditionalMoments via_precision(const PartialArray& obs, const ArrayNormalModel& model, bool with_covariance,
                                 const std::vector<Index>& observed, const std::vector<Index>& missing,
                                 Index observation) {
    const Shape& shape = model.shape();
    std::vector<Eigen::MatrixXd> prec;
    std::vector<const Eigen::MatrixXd*> prec_ptr;
    for (const auto& f : model.covariance.factors()) prec.push_back(f.precision());
    for (const auto& p : prec) prec_ptr.push_back(&p);
    const IndexRows mis_idx = cell_indices(shape, missing);
    const auto& mu = model.mean.values();

    // g = Lambda^{-1} d with d zero-padded at the missing cells.
    MultiwayArray g(shape);
    for (Index c : observed) g[c] = obs.values[c] - mu[c];
    double d_dot_g = 0.0;
    {
        const MultiwayArray d = g;
        for (Index k = 0; k < shape.order(); ++k) g = mode_multiply(g, prec[static_cast<std::size_t>(k)], k);
        for (Index c : observed) d_dot_g += d[c] * g[c];
    }

    const Index n_m = mis_idx.rows();
    const Eigen::MatrixXd mm = kron_block(prec_ptr, mis_idx, mis_idx, true);
    Eigen::LLT<Eigen::MatrixXd> llt(mm);
    check_pivots(llt, mm, observation, "missing-block precision");
    Eigen::VectorXd g_m(n_m);
    for (Index r = 0; r < n_m; ++r) g_m[r] = g[missing[static_cast<std::size_t>(r)]];
    const Eigen::VectorXd h = llt.matrixL().solve(g_m);
    const Eigen::VectorXd shift = llt.matrixU().solve(h);

    ConditionalMoments out{obs.values, missing, {}, 0.0};
    for (Index r = 0; r < n_m; ++r) {
        const Index c = missing[static_cast<std::size_t>(r)];
        out.mean[c] = mu[c] - shift[r];
    }
    const Index n_o = static_cast<Index>(observed.size());
    if (n_o > 0) {
        // log|R Lambda R^T| = log|Lambda| + log|(Lambda^{-1})_MM|.
        const double log_det = model.covariance.log_det() + 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double quad = d_dot_g - h.squaredNorm();
        out.loglik = -0.5 * (static_cast<double>(n_o) * kLog2Pi + log_det + quad);
    }
    if (with_covariance) {
        Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(n_m, n_m);
        llt.matrixL().solveInPlace(linv);
        out.covariance = Eigen::MatrixXd::Zero(n_m, n_m);
        out.covariance.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
        out.covariance.triangularView<Eigen::StrictlyUpper>() = out.covariance.transpose();
    }
    return out;
}

}  // namespace

ConditionalMoments condition_on_observed(const PartialArray& obs, const ArrayNormalModel& model, bool with_covariance,
                                         ConditioningRoute route, Index observation) {
    model.validate();
    if (!(obs.shape() == model.shape())) throw InvalidArgument("observation shape does not match the model");
    const auto observed = obs.mask.observed_cells();
    const auto missing = obs.mask.missing_cells();

    if (missing.empty()) {
        // Fully observed: the array density evaluated through the Kronecker factors.
        return {obs.values, {}, {}, log_density(obs.values, model)};
    }
    if (route == ConditioningRoute::Automatic) {
        route = missing.size() < observed.size() ? ConditioningRoute::Precision : ConditioningRoute::Covariance;
    }
    if (route == ConditioningRoute::Precision) {
        return via_precision(obs, model, with_covariance, observed, missing, observation);
    }
    return via_covariance(obs, model, with_covariance, observed, missing, observation);
}

Eigen::MatrixXd expected_mode_scatter(std::span<const MultiwayArray> residuals,
                                      std::span<const ConditionalMoments> moments,
                                      std::span<const CovarianceFactor> factors, Index k) {
    if (residuals.empty()) throw InvalidArgument("no residual arrays");
    const Shape& shape = residuals.front().shape();
    if (static_cast<Index>(factors.size()) != shape.order()) throw InvalidArgument("factor count does not match shape");
    const Index mk = shape.dim(k);

    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(mk, mk);
    for (const auto& y : residuals) {
        MultiwayArray z = y;
        for (Index j = 0; j < shape.order(); ++j) {
            if (j != k) z = mode_solve_lower(z, factors[static_cast<std::size_t>(j)].root(), j);
        }
        const Eigen::MatrixXd zk = matricize(z, k);
        scatter.selfadjointView<Eigen::Lower>().rankUpdate(zk);
    }

    // Conditional-covariance part: sum over missing pairs (a, b) of
    // C(a, b) * prod_{j != k} P_j(a_j, b_j), accumulated at (a_k, b_k).
    std::vector<Eigen::MatrixXd> prec(static_cast<std::size_t>(shape.order()));
    bool any_covariance = false;
    for (const auto& m : moments) any_covariance = any_covariance || m.covariance.size() > 0;
    if (any_covariance) {
        for (Index j = 0; j < shape.order(); ++j) {
            if (j != k) prec[static_cast<std::size_t>(j)] = factors[static_cast<std::size_t>(j)].precision();
        }
    }
    Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(mk, mk);
    for (const auto& m : moments) {
        if (m.covariance.size() == 0) continue;
        const IndexRows idx = cell_indices(shape, m.missing);
        const Index n_m = idx.rows();
        for (Index b = 0; b < n_m; ++b) {
            for (Index a = b; a < n_m; ++a) {
                double w = m.covariance(a, b);
                for (Index j = 0; j < shape.order(); ++j) {
                    if (j != k) w *= prec[static_cast<std::size_t>(j)](idx(a, j), idx(b, j));
                }
                const Index u = idx(a, k);
                const Index v = idx(b, k);
                if (a == b) {
                    correction(u, v) += w;
                } else {
                    correction(u, v) += w;
                    correction(v, u) += w;
                }
            }
        }
    }
    scatter.triangularView<Eigen::StrictlyUpper>() = scatter.transpose();
    return scatter + correction;
}

}  // namespace arrayem
