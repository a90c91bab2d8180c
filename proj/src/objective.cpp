#include "mcrfm/objective.hpp"

#include <algorithm>
#include <cmath>

#include "mcrfm/error.hpp"

namespace mcrfm::objective {

namespace {

ad::Var branch_term(ad::Var v, ad::Var u, ad::Var mult, double weight) {
  ad::Tape& tape = *v.tape;
  if (v.cols() == 0) return tape.constant(Matrix(1, 1));
  ad::Var sq = ad::row_sum(ad::square(ad::sub(v, u)));
  return ad::scale(ad::mean_all(ad::mul(sq, mult)), weight);
}

Matrix smoothed_targets(const std::vector<int>& labels, std::size_t k, double s) {
  if (!(s >= 0.0 && s < 1.0)) throw InvalidArgument("ce_loss: smoothing must lie in [0, 1)");
  if (k < 2) throw InvalidArgument("ce_loss: need at least two classes");
  Matrix t(labels.size(), k, s / static_cast<double>(k - 1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidArgument("ce_loss: label " + std::to_string(labels[i]) + " out of range");
    }
    t(i, static_cast<std::size_t>(labels[i])) = 1.0 - s;
  }
  return t;
}

}  // namespace

FmTerms fm_loss(const pm::Velocity& pred, const pm::Velocity& target, const heads::Gate& gate, double w_h,
                double lambda_e) {
  return {branch_term(pred.v_h, target.v_h, gate.m_h, w_h), branch_term(pred.v_e, target.v_e, gate.m_e, lambda_e)};
}

ad::Var ce_loss(ad::Var logits, const std::vector<int>& labels, double smoothing) {
  if (logits.rows() != labels.size()) throw InvalidArgument("ce_loss: label count mismatch");
  ad::Var t = logits.tape->constant(smoothed_targets(labels, logits.cols(), smoothing));
  return ad::neg(ad::mean_all(ad::row_sum(ad::mul(ad::log_softmax_rows(logits), t))));
}

double ce_value(const Matrix& logits, const std::vector<int>& labels, double smoothing) {
  if (logits.rows != labels.size()) throw InvalidArgument("ce_value: label count mismatch");
  const Matrix t = smoothed_targets(labels, logits.cols, smoothing);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto x = logits.row(r);
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (double v : x) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < logits.cols; ++c) total -= t(r, c) * (x[c] - lse);
  }
  return logits.rows ? total / static_cast<double>(logits.rows) : 0.0;
}

double ramp(int epoch, int ramp_epochs) {
  if (ramp_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(ramp_epochs));
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"L_fm_h", b.l_fm_h},       {"L_fm_e", b.l_fm_e},         {"L_fm", b.l_fm},
          {"L_ce", b.l_ce},           {"L_total", b.l_total},       {"w_h", b.w_h},
          {"lambda_e", b.lambda_e},   {"lambda_cls", b.lambda_cls}, {"mean_m_h", b.mean_m_h},
          {"mean_m_e", b.mean_m_e},   {"mean_beta", b.mean_beta}};
}

Total total_loss(const FmTerms& fm, ad::Var ce, double lambda_cls) {
  Total out;
  ad::Var l_fm = ad::add(fm.l_h, fm.l_e);
  out.loss = ad::add(l_fm, ad::scale(ce, lambda_cls));
  LossBreakdown& b = out.breakdown;
  b.l_fm_h = fm.l_h.scalar();
  b.l_fm_e = fm.l_e.scalar();
  b.l_fm = l_fm.scalar();
  b.l_ce = ce.scalar();
  b.l_total = out.loss.scalar();
  b.lambda_cls = lambda_cls;
  if (!std::isfinite(b.l_total)) {
    throw DivergenceError("non-finite loss: " + to_json(b).dump());
  }
  return out;
}

}  // namespace mcrfm::objective
