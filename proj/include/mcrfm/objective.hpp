#pragma once

#include <vector>

#include "json.hpp"
#include "mcrfm/heads.hpp"
#include "mcrfm/product_manifold.hpp"

namespace mcrfm::objective {

struct FmTerms {
  ad::Var l_h;  // 1 x 1
  ad::Var l_e;  // 1 x 1
};

/// Batch means of w_h m_h |v_h - u_h*|^2 and lambda_e m_e |v_e - u_e*|^2.
/// A zero-width branch contributes a constant 0.
FmTerms fm_loss(const pm::Velocity& pred, const pm::Velocity& target, const heads::Gate& gate, double w_h,
                double lambda_e);

/// Cross-entropy against (1 - s) on the label and s / (K - 1) elsewhere.
ad::Var ce_loss(ad::Var logits, const std::vector<int>& labels, double smoothing);
/// Value-only variant for evaluation.
double ce_value(const Matrix& logits, const std::vector<int>& labels, double smoothing);

/// min(1, (epoch + 1) / ramp_epochs); 1 when ramp_epochs = 0.
double ramp(int epoch, int ramp_epochs);

struct LossBreakdown {
  double l_fm_h = 0.0, l_fm_e = 0.0, l_fm = 0.0, l_ce = 0.0, l_total = 0.0;
  double w_h = 1.0, lambda_e = 1.0, lambda_cls = 1.0;
  double mean_m_h = 1.0, mean_m_e = 1.0, mean_beta = 0.5;
};
nlohmann::json to_json(const LossBreakdown& b);

struct Total {
  ad::Var loss;
  LossBreakdown breakdown;
};
/// L_fm_h + L_fm_e + lambda_cls L_ce. Throws DivergenceError with the breakdown if non-finite.
Total total_loss(const FmTerms& fm, ad::Var ce, double lambda_cls);

}  // namespace mcrfm::objective
