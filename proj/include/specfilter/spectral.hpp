#ifndef SPECFILTER_SPECTRAL_HPP
#define SPECFILTER_SPECTRAL_HPP

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "specfilter/common.hpp"
#include "specfilter/covariance.hpp"

namespace specfilter {

// Paper operating points.
inline constexpr double kChairPresetAlpha = 70.0;
inline constexpr double kVqaPresetAlpha = 6.0;
inline constexpr double kDefaultEta = 0.1;

struct SpectralDecomposition {
    Eigen::MatrixXd basis;        // orthonormal columns q_j
    Eigen::VectorXd eigenvalues;  // sorted descending, non-negative after clipping
    int clipped_count = 0;        // negative eigenvalues clipped to zero

    Eigen::Index dim() const { return basis.rows(); }

    double lambda_top() const { return eigenvalues.size() > 0 ? eigenvalues(0) : 0.0; }

    // modes carrying more than rel_tol of the top eigenvalue
    int rank(double rel_tol = 1e-10) const {
        const double cutoff = rel_tol * lambda_top();
        int r = 0;
        for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
            if (eigenvalues(i) > cutoff) ++r;
        return r;
    }

    std::uint64_t fingerprint() const {
        return fnv1a64(eigenvalues.data(),
                       static_cast<std::size_t>(eigenvalues.size()) * sizeof(double));
    }
};

namespace detail {

// Fix the eigenvector sign ambiguity: the largest-magnitude entry of each
// column is made positive, ties resolved to the lowest index.
inline void canonicalize_signs(Eigen::MatrixXd& basis) {
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::Index pivot = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < basis.rows(); ++r) {
            const double a = std::abs(basis(r, c));
            if (a > best) {
                best = a;
                pivot = r;
            }
        }
        if (basis(pivot, c) < 0) basis.col(c) = -basis.col(c);
    }
}

// Symmetric eigensolve, descending order, canonical signs, no clipping.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> sym_eig(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success)
        raise(errc::convergence_failure, "symmetric eigensolver did not converge");
    Eigen::VectorXd values = solver.eigenvalues().reverse();
    Eigen::MatrixXd basis = solver.eigenvectors().rowwise().reverse();
    canonicalize_signs(basis);
    return {std::move(basis), std::move(values)};
}

}  // namespace detail

inline SpectralDecomposition eigendecompose(const HallucinationCovariance& cov) {
    const Eigen::MatrixXd& sigma = cov.sigma;
    if (sigma.rows() != sigma.cols())
        raise(errc::shape_mismatch, "covariance matrix is not square");
    if (!sigma.allFinite()) raise(errc::not_finite, "covariance has non-finite entries");
    const double scale = sigma.cwiseAbs().maxCoeff();
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale && asym > 0.0)
        raise(errc::not_symmetric, "covariance asymmetry " + std::to_string(asym) +
                                       " exceeds tolerance");

    const Eigen::MatrixXd symmetrized = (sigma + sigma.transpose()) / 2.0;
    auto [basis, values] = detail::sym_eig(symmetrized);

    SpectralDecomposition out;
    const double lambda_top = std::max(values(0), 0.0);
    const double clip_floor = -1e-10 * lambda_top;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) < 0) {
            if (values(i) < clip_floor)
                raise(errc::not_positive_semidefinite,
                      "eigenvalue " + std::to_string(values(i)) +
                          " is too negative for a PSD covariance (top " +
                          std::to_string(lambda_top) + ")");
            values(i) = 0.0;
            ++out.clipped_count;
        }
    }
    out.basis = std::move(basis);
    out.eigenvalues = std::move(values);
    return out;
}

// Eq-style soft damping of one eigenvalue.
inline double damping(double lambda, double alpha) {
    if (lambda < 0 || alpha < 0)
        raise(errc::invalid_config, "damping requires lambda >= 0 and alpha >= 0");
    return 1.0 / (1.0 + alpha * lambda);
}

// Per-mode variance after filtering: lambda / (1 + alpha*lambda)^2.
inline Eigen::VectorXd transformed_spectrum(const Eigen::VectorXd& eigenvalues, double alpha) {
    Eigen::VectorXd out(eigenvalues.size());
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        const double f = damping(eigenvalues(i), alpha);
        out(i) = eigenvalues(i) * f * f;
    }
    return out;
}

// Closed-form alpha making the top mode retain exactly eta of its amplitude.
inline double select_alpha(double lambda1, double eta) {
    if (eta <= 0.0 || eta >= 1.0)
        raise(errc::invalid_config, "eta must lie in (0,1), got " + std::to_string(eta));
    if (!(lambda1 > 0.0))
        raise(errc::degenerate_spectrum,
              "top eigenvalue " + std::to_string(lambda1) + " is not positive");
    return (1.0 - eta) / (eta * lambda1);
}

enum class OperatorKind { soft, hard, mean_shift, svd, identity };

inline const char* operator_kind_name(OperatorKind k) {
    switch (k) {
        case OperatorKind::soft:       return "soft";
        case OperatorKind::hard:       return "hard";
        case OperatorKind::mean_shift: return "mean";
        case OperatorKind::svd:        return "svd";
        case OperatorKind::identity:   return "identity";
    }
    return "?";
}

// Symmetric operator applied on the model-dimension axis, plus the affine
// shift used by the mean-subtraction baseline (never folded into weights).
struct SuppressionOperator {
    Eigen::MatrixXd matrix;
    OperatorKind kind = OperatorKind::identity;
    double alpha = 0.0;
    int hard_k = 0;
    Eigen::VectorXd shift;              // mean_shift only
    std::string spectrum_fingerprint;   // hash of the source eigenvalues
    std::optional<double> eta;          // set when alpha came from the matheuristic

    Eigen::Index dim() const { return matrix.rows(); }

    bool weight_foldable() const { return kind != OperatorKind::mean_shift; }

    // Filter feature rows: rows * P (P symmetric), minus the shift if affine.
    Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const {
        if (rows.cols() != dim())
            raise(errc::dim_mismatch, "feature dim " + std::to_string(rows.cols()) +
                                          " does not match operator dim " + std::to_string(dim()));
        Eigen::MatrixXd out = rows * matrix;
        if (kind == OperatorKind::mean_shift && shift.size() > 0)
            out.rowwise() -= shift.transpose();
        return out;
    }

    std::uint64_t checksum() const {
        return fnv1a64(matrix.data(), static_cast<std::size_t>(matrix.size()) * sizeof(double));
    }
};

inline SuppressionOperator identity_operator(Eigen::Index dim) {
    SuppressionOperator op;
    op.matrix = Eigen::MatrixXd::Identity(dim, dim);
    op.kind = OperatorKind::identity;
    return op;
}

inline SuppressionOperator suppression_operator(const SpectralDecomposition& spec, double alpha) {
    if (alpha < 0) raise(errc::invalid_config, "alpha must be non-negative");
    SuppressionOperator op;
    op.kind = OperatorKind::soft;
    op.alpha = alpha;
    op.spectrum_fingerprint = hex64(spec.fingerprint());
    if (alpha == 0.0) {
        // exact identity so that alpha=0 edits are bit-preserving
        op.matrix = Eigen::MatrixXd::Identity(spec.dim(), spec.dim());
        return op;
    }
    Eigen::VectorXd damped(spec.eigenvalues.size());
    for (Eigen::Index i = 0; i < damped.size(); ++i)
        damped(i) = damping(spec.eigenvalues(i), alpha);
    Eigen::MatrixXd p = spec.basis * damped.asDiagonal() * spec.basis.transpose();
    op.matrix = ((p + p.transpose()) / 2.0).eval();
    return op;
}

inline SuppressionOperator hard_projection(const SpectralDecomposition& spec, int k) {
    const Eigen::Index d = spec.dim();
    if (k < 0 || k > d)
        raise(errc::k_out_of_range,
              "k=" + std::to_string(k) + " outside [0," + std::to_string(d) + "]");
    SuppressionOperator op;
    op.kind = OperatorKind::hard;
    op.hard_k = k;
    op.spectrum_fingerprint = hex64(spec.fingerprint());
    if (k == 0) {
        op.matrix = Eigen::MatrixXd::Identity(d, d);
    } else if (k == d) {
        op.matrix = Eigen::MatrixXd::Zero(d, d);
    } else {
        const auto top = spec.basis.leftCols(k);
        Eigen::MatrixXd p = Eigen::MatrixXd::Identity(d, d) - top * top.transpose();
        op.matrix = ((p + p.transpose()) / 2.0).eval();
    }
    return op;
}

inline SuppressionOperator mean_shift_operator(const Eigen::VectorXd& mu) {
    if (!mu.allFinite()) raise(errc::not_finite, "mean direction has non-finite entries");
    SuppressionOperator op;
    op.kind = OperatorKind::mean_shift;
    op.matrix = Eigen::MatrixXd::Identity(mu.size(), mu.size());
    op.shift = mu;
    op.spectrum_fingerprint =
        hex64(fnv1a64(mu.data(), static_cast<std::size_t>(mu.size()) * sizeof(double)));
    return op;
}

// Ablation basis: right-singular vectors of the difference matrix with
// pseudo-eigenvalues s^2/N, interchangeable with eigendecompose(covariance).
inline SpectralDecomposition svd_modes(const FeatureMatrix& diffs) {
    if (diffs.role != FeatureRole::difference)
        raise(errc::role_mismatch,
              std::string("expected difference role, got ") + role_name(diffs.role));
    if (diffs.samples() == 0) raise(errc::empty_set, "no difference vectors");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(diffs.data, Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success)
        raise(errc::convergence_failure, "SVD did not converge");

    SpectralDecomposition out;
    out.basis = svd.matrixV();
    detail::canonicalize_signs(out.basis);
    out.eigenvalues = Eigen::VectorXd::Zero(diffs.dim());
    const double n = static_cast<double>(diffs.samples());
    const auto& s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size() && i < out.eigenvalues.size(); ++i)
        out.eigenvalues(i) = s(i) * s(i) / n;
    return out;
}

// Generic spectral filter A^(f) = Q f(Lambda) Q^T for symmetric A (no PSD
// clipping; f must be total on the spectrum).
inline Eigen::MatrixXd apply_spectral_function(const Eigen::MatrixXd& matrix,
                                               const std::function<double(double)>& f) {
    if (matrix.rows() != matrix.cols()) raise(errc::shape_mismatch, "matrix is not square");
    if (!matrix.allFinite()) raise(errc::not_finite, "matrix has non-finite entries");
    const double scale = matrix.cwiseAbs().maxCoeff();
    const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale && asym > 0.0)
        raise(errc::not_symmetric, "matrix is not symmetric");
    auto [basis, values] = detail::sym_eig((matrix + matrix.transpose()) / 2.0);
    Eigen::VectorXd mapped(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) mapped(i) = f(values(i));
    Eigen::MatrixXd out = basis * mapped.asDiagonal() * basis.transpose();
    return ((out + out.transpose()) / 2.0).eval();
}

// Rows behind the spectrum plots: index, eigenvalue, damped factor, filtered
// variance. Index starts at 1.
inline std::string spectrum_csv(const Eigen::VectorXd& eigenvalues, double alpha) {
    std::string out = "index,eigenvalue,damped,transformed\n";
    char buf[128];
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        const double lam = eigenvalues(i);
        const double f = damping(lam, alpha);
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(i + 1), lam, f, lam * f * f);
        out += buf;
    }
    return out;
}

}  // namespace specfilter

#endif  // SPECFILTER_SPECTRAL_HPP
