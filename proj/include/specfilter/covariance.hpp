#ifndef SPECFILTER_COVARIANCE_HPP
#define SPECFILTER_COVARIANCE_HPP

#include <optional>
#include <string>

#include <Eigen/Core>

#include "specfilter/common.hpp"

namespace specfilter {

enum class FeatureRole { positive, negative, difference };

inline const char* role_name(FeatureRole r) {
    switch (r) {
        case FeatureRole::positive:  return "positive";
        case FeatureRole::negative:  return "negative";
        case FeatureRole::difference: return "difference";
    }
    return "?";
}

// Pooled per-sample features, one row per sample.
struct FeatureMatrix {
    Eigen::MatrixXd data;
    FeatureRole role = FeatureRole::difference;
    std::optional<int> layer;

    Eigen::Index samples() const { return data.rows(); }
    Eigen::Index dim() const { return data.cols(); }
};

inline FeatureMatrix make_feature_matrix(Eigen::MatrixXd data, FeatureRole role,
                                         std::optional<int> layer = std::nullopt) {
    if (data.rows() < 1 || data.cols() < 1)
        raise(errc::empty_set, "feature matrix must be at least 1x1");
    if (!data.allFinite()) raise(errc::not_finite, "feature matrix has non-finite entries");
    return FeatureMatrix{std::move(data), role, layer};
}

// Uncentered second moment of the difference vectors (their mean is kept in).
struct HallucinationCovariance {
    Eigen::MatrixXd sigma;
    std::size_t sample_count = 0;
    std::optional<int> layer;
    bool centered = false;

    Eigen::Index dim() const { return sigma.rows(); }
};

// Mean over the token axis of one sequence, accumulated in f64.
inline Eigen::VectorXd pool_tokens(const Eigen::MatrixXd& sequence) {
    if (sequence.rows() == 0) raise(errc::empty_sequence, "cannot pool an empty sequence");
    return sequence.colwise().mean();
}

inline FeatureMatrix difference_set(const FeatureMatrix& pos, const FeatureMatrix& neg) {
    if (pos.role != FeatureRole::positive || neg.role != FeatureRole::negative)
        raise(errc::role_mismatch, std::string("expected positive/negative roles, got ") +
                                       role_name(pos.role) + "/" + role_name(neg.role));
    if (pos.samples() != neg.samples() || pos.dim() != neg.dim())
        raise(errc::shape_mismatch,
              "positive is " + std::to_string(pos.samples()) + "x" + std::to_string(pos.dim()) +
                  " but negative is " + std::to_string(neg.samples()) + "x" +
                  std::to_string(neg.dim()));
    FeatureMatrix out;
    out.data = pos.data - neg.data;
    out.role = FeatureRole::difference;
    out.layer = pos.layer ? pos.layer : neg.layer;
    return out;
}

namespace detail {

// Elementwise Kahan update keeps block-order effects at the rounding floor.
inline void kahan_add(Eigen::MatrixXd& sum, Eigen::MatrixXd& comp, const Eigen::MatrixXd& term) {
    const Eigen::MatrixXd y = term - comp;
    const Eigen::MatrixXd t = sum + y;
    comp = (t - sum) - y;
    sum = t;
}

}  // namespace detail

// Streaming accumulator for D^T D and the column sum; batches may arrive in any
// order and from multiple threads via merge().
class CovarianceAccumulator {
  public:
    explicit CovarianceAccumulator(Eigen::Index dim)
        : sum_outer_(Eigen::MatrixXd::Zero(dim, dim)),
          comp_outer_(Eigen::MatrixXd::Zero(dim, dim)),
          sum_(Eigen::MatrixXd::Zero(dim, 1)),
          comp_(Eigen::MatrixXd::Zero(dim, 1)) {
        if (dim < 1) raise(errc::empty_set, "dimension must be positive");
    }

    Eigen::Index dim() const { return sum_outer_.rows(); }
    std::size_t count() const { return count_; }

    void add(const Eigen::MatrixXd& rows) {
        if (rows.rows() == 0) return;
        if (rows.cols() != dim())
            raise(errc::shape_mismatch, "batch has dim " + std::to_string(rows.cols()) +
                                            ", accumulator has " + std::to_string(dim()));
        if (!rows.allFinite()) raise(errc::not_finite, "batch has non-finite entries");
        detail::kahan_add(sum_outer_, comp_outer_, rows.transpose() * rows);
        Eigen::MatrixXd colsum = rows.colwise().sum().transpose();
        detail::kahan_add(sum_, comp_, colsum);
        count_ += static_cast<std::size_t>(rows.rows());
    }

    void merge(const CovarianceAccumulator& other) {
        if (other.dim() != dim()) raise(errc::shape_mismatch, "accumulator dims differ");
        detail::kahan_add(sum_outer_, comp_outer_, other.sum_outer_);
        detail::kahan_add(sum_, comp_, other.sum_);
        count_ += other.count_;
    }

    Eigen::VectorXd mean() const {
        if (count_ == 0) raise(errc::empty_set, "no samples accumulated");
        return sum_.col(0) / static_cast<double>(count_);
    }

    HallucinationCovariance finalize(bool centered = false,
                                     std::optional<int> layer = std::nullopt) const {
        if (count_ == 0) raise(errc::empty_set, "no samples accumulated");
        const double n = static_cast<double>(count_);
        Eigen::MatrixXd sigma = sum_outer_ / n;
        if (centered) {
            const Eigen::VectorXd mu = mean();
            sigma -= mu * mu.transpose();
        }
        sigma = ((sigma + sigma.transpose()) / 2.0).eval();
        return HallucinationCovariance{std::move(sigma), count_, layer, centered};
    }

  private:
    Eigen::MatrixXd sum_outer_, comp_outer_;
    Eigen::MatrixXd sum_, comp_;  // column sums as d×1
    std::size_t count_ = 0;
};

inline HallucinationCovariance hallucination_covariance(const FeatureMatrix& diffs,
                                                        bool centered = false) {
    if (diffs.role != FeatureRole::difference)
        raise(errc::role_mismatch,
              std::string("expected difference role, got ") + role_name(diffs.role));
    if (diffs.samples() == 0) raise(errc::empty_set, "no difference vectors");
    CovarianceAccumulator acc(diffs.dim());
    acc.add(diffs.data);
    return acc.finalize(centered, diffs.layer);
}

inline Eigen::VectorXd mean_difference(const FeatureMatrix& diffs) {
    if (diffs.role != FeatureRole::difference)
        raise(errc::role_mismatch,
              std::string("expected difference role, got ") + role_name(diffs.role));
    if (diffs.samples() == 0) raise(errc::empty_set, "no difference vectors");
    return diffs.data.colwise().mean();
}

}  // namespace specfilter

#endif  // SPECFILTER_COVARIANCE_HPP
