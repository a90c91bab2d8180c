#include "mcrfm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mcrfm/checkpoint.hpp"
#include "mcrfm/error.hpp"
#include "mcrfm/optim.hpp"
#include "mcrfm/transport.hpp"

namespace mcrfm::train {

using nlohmann::json;

namespace {

enum : std::uint64_t { kTagShuffle = 21, kTagTime = 22 };
constexpr std::size_t kInferChunk = 256;

double mean_of(const Matrix& m) {
  if (m.data.empty()) return 0.0;
  double s = 0.0;
  for (double v : m.data) s += v;
  return s / static_cast<double>(m.data.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

pm::Batch gather(const pm::Batch& z, const std::vector<std::size_t>& rows) {
  return {ad::gather_rows(z.z_h, rows), ad::gather_rows(z.z_e, rows)};
}

transport::Field make_field(const BoundAdapter& b, ad::Var ctx) {
  return [&b, ctx](const pm::Batch& z, const Matrix& t) { return field::eval_field(b.field, z, t, ctx, *b.config); };
}

}  // namespace

SupportState encode_support(const BoundAdapter& b, ad::Tape& tape, const Matrix& support_x,
                            const std::vector<int>& labels, std::size_t num_classes, const Config& cfg,
                            const FrozenBank* frozen) {
  SupportState s;
  const double eps = cfg.train.eps_ball;
  s.proj = projector::project(b.projector, tape.constant(support_x), cfg.model, eps);
  if (frozen) {
    s.bank.p_h = tape.constant(frozen->p_h);
    s.bank.p_e = tape.constant(frozen->p_e);
    s.bank.num_classes = num_classes;
    s.bank.tau = cfg.train.tau;
  } else {
    s.bank = task::build_prototypes(s.proj.u_h, s.proj.u_e, labels, num_classes, cfg.train.tau, cfg.model.curvature,
                                    eps);
    if (cfg.train.detach_prototypes) s.bank = task::detach(s.bank);
  }
  s.ctx = task::encode_context(s.bank, b.encoder, cfg.model);
  return s;
}

StepOutput batch_objective(const BoundAdapter& b, const SupportState& s, const std::vector<int>& labels,
                           const std::vector<std::size_t>& rows, const Matrix& t, int epoch, const Config& cfg,
                           bool record_gaps) {
  const ModelConfig& mc = cfg.model;
  const TrainConfig& tc = cfg.train;
  ad::Tape& tape = *s.ctx.tape;
  const double c = mc.curvature;
  std::vector<int> y(rows.size());
  std::vector<std::size_t> proto_rows(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[i] = labels.at(rows[i]);
    proto_rows[i] = static_cast<std::size_t>(y[i]);
  }
  const pm::Batch z0 = gather({s.proj.z_h, s.proj.z_e}, rows);
  const pm::Batch z1 = gather({s.bank.p_h, s.bank.p_e}, proto_rows);
  ad::Var tv = tape.constant(t);
  const pm::Batch zt = pm::interpolate(z0, z1, tv, c, tc.eps_ball);
  const pm::Velocity target = pm::target_velocity(zt, z1, tv, c);
  const pm::Velocity pred = field::eval_field(b.field, zt, t, s.ctx, mc);
  heads::Gate gate_t = heads::gate(b.head, heads::features(b.head, zt, mc), s.ctx, mc);
  if (!tc.fm_gate_gradient) gate_t = {ad::stop_gradient(gate_t.g), ad::stop_gradient(gate_t.m_h), ad::stop_gradient(gate_t.m_e)};
  const double w_h = objective::ramp(epoch, tc.ramp_epochs);
  const objective::FmTerms fm = objective::fm_loss(pred, target, gate_t, w_h, tc.lambda_e);

  transport::SolverConfig sc{tc.nfe, tc.eps_ball, record_gaps && mc.d_h > 0};
  const transport::Result tr = transport::integrate(z0, make_field(b, s.ctx), c, sc);
  const heads::Hybrid hy = heads::hybrid_logits(b.head, tr.state, s.bank, s.ctx, mc);
  ad::Var ce = objective::ce_loss(hy.logits, y, tc.smoothing);

  StepOutput out;
  out.total = objective::total_loss(fm, ce, tc.lambda_cls);
  objective::LossBreakdown& bd = out.total.breakdown;
  bd.w_h = w_h;
  bd.lambda_e = tc.lambda_e;
  bd.mean_m_h = mean_of(gate_t.m_h.value());
  bd.mean_m_e = mean_of(gate_t.m_e.value());
  bd.mean_beta = mean_of(hy.beta.value());
  out.mean_g = mean_of(gate_t.g.value());
  out.mean_beta = bd.mean_beta;
  for (const auto& step : tr.gaps) out.gaps.insert(out.gaps.end(), step.begin(), step.end());
  return out;
}

double loss_value(AdapterParams& params, const Matrix& support_x, const std::vector<int>& labels,
                  const std::vector<std::size_t>& rows, const Matrix& t, int epoch, const Config& cfg,
                  bool with_grad) {
  ad::Tape tape;
  const BoundAdapter b = bind(tape, params);
  const SupportState s = encode_support(b, tape, support_x, labels, params.num_classes, cfg);
  const StepOutput out = batch_objective(b, s, labels, rows, t, epoch, cfg, false);
  if (with_grad) {
    for (ad::ParamTensor* p : params.params()) p->zero_grad();
    tape.backward(out.total.loss);
  }
  return out.total.breakdown.l_total;
}

Matrix sample_times(std::uint64_t seed, int epoch, int batch, std::size_t n, double eps_t) {
  CounterRng rng(stream_key(seed, kTagTime, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch)));
  Matrix t(n, 1);
  for (double& v : t.data) v = rng.uniform(eps_t, 1.0 - eps_t);
  return t;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(stream_key(seed, kTagShuffle, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  return order;
}

Inference infer(AdapterParams& params, const Matrix& support_x, const std::vector<int>& support_y,
                const Matrix& query_x, const Config& cfg, bool record_gaps) {
  const ModelConfig& mc = params.config;
  if (query_x.cols != static_cast<std::size_t>(mc.feature_dim) ||
      support_x.cols != static_cast<std::size_t>(mc.feature_dim)) {
    throw InvalidArgument("infer: feature dimension does not match the adapter");
  }
  FrozenBank frozen;
  {
    ad::Tape tape;
    const BoundAdapter b = bind(tape, params);
    const SupportState s = encode_support(b, tape, support_x, support_y, params.num_classes, cfg);
    frozen = {s.bank.p_h.value(), s.bank.p_e.value()};
  }
  Inference out;
  out.logits = Matrix(query_x.rows, params.num_classes);
  double g_sum = 0.0, beta_sum = 0.0;
  for (std::size_t start = 0; start < query_x.rows; start += kInferChunk) {
    const std::size_t n = std::min(kInferChunk, query_x.rows - start);
    Matrix chunk(n, query_x.cols);
    std::copy(query_x.data.begin() + static_cast<std::ptrdiff_t>(start * query_x.cols),
              query_x.data.begin() + static_cast<std::ptrdiff_t>((start + n) * query_x.cols), chunk.data.begin());
    ad::Tape tape;
    const BoundAdapter b = bind(tape, params);
    task::PrototypeBank bank{tape.constant(frozen.p_h), tape.constant(frozen.p_e), params.num_classes, cfg.train.tau};
    ad::Var ctx = task::encode_context(bank, b.encoder, mc);
    const projector::Projection q = projector::project(b.projector, tape.constant(chunk), mc, cfg.train.eps_ball);
    transport::SolverConfig sc{cfg.train.nfe, cfg.train.eps_ball, record_gaps && mc.d_h > 0};
    const transport::Result tr = transport::integrate({q.z_h, q.z_e}, make_field(b, ctx), mc.curvature, sc);
    const heads::Hybrid hy = heads::hybrid_logits(b.head, tr.state, bank, ctx, mc);
    const Matrix& lg = hy.logits.value();
    std::copy(lg.data.begin(), lg.data.end(), out.logits.row(start).begin());
    for (const auto& step : tr.gaps) out.gaps.insert(out.gaps.end(), step.begin(), step.end());
    g_sum += mean_of(hy.gate.g.value()) * static_cast<double>(n);
    beta_sum += mean_of(hy.beta.value()) * static_cast<double>(n);
  }
  out.predictions.resize(query_x.rows);
  for (std::size_t r = 0; r < query_x.rows; ++r) {
    auto row = out.logits.row(r);
    out.predictions[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  if (query_x.rows) {
    out.mean_g = g_sum / static_cast<double>(query_x.rows);
    out.mean_beta = beta_sum / static_cast<double>(query_x.rows);
  }
  return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("accuracy: size mismatch");
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double fm_grid_residual(AdapterParams& params, const Matrix& support_x, const std::vector<int>& labels,
                        const Config& cfg) {
  const ModelConfig& mc = params.config;
  ad::Tape tape;
  const BoundAdapter b = bind(tape, params);
  const SupportState s = encode_support(b, tape, support_x, labels, params.num_classes, cfg);
  const std::size_t n = labels.size();
  std::vector<std::size_t> rows(n), proto_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    proto_rows[i] = static_cast<std::size_t>(labels[i]);
  }
  const pm::Batch z0{s.proj.z_h, s.proj.z_e};
  const pm::Batch z1 = gather({s.bank.p_h, s.bank.p_e}, proto_rows);
  double total = 0.0;
  constexpr int kGrid = 9;
  for (int g = 1; g <= kGrid; ++g) {
    const Matrix t(n, 1, 0.1 * g);
    ad::Var tv = tape.constant(t);
    const pm::Batch zt = pm::interpolate(z0, z1, tv, mc.curvature, cfg.train.eps_ball);
    const pm::Velocity u = pm::target_velocity(zt, z1, tv, mc.curvature);
    const pm::Velocity v = field::eval_field(b.field, zt, t, s.ctx, mc);
    const Matrix& vh = v.v_h.value();
    const Matrix& uh = u.v_h.value();
    const Matrix& ve = v.v_e.value();
    const Matrix& ue = u.v_e.value();
    double s2 = 0.0;
    for (std::size_t k = 0; k < vh.size(); ++k) s2 += (vh.data[k] - uh.data[k]) * (vh.data[k] - uh.data[k]);
    for (std::size_t k = 0; k < ve.size(); ++k) s2 += (ve.data[k] - ue.data[k]) * (ve.data[k] - ue.data[k]);
    total += s2 / static_cast<double>(n);
  }
  return total / kGrid;
}

StabilityReport diagnostics(const std::vector<EpochRecord>& epochs, const std::vector<double>& gaps,
                            const Config& cfg) {
  if (epochs.empty()) throw InvalidArgument("diagnostics: no epochs logged");
  const StabilityThresholds& th = cfg.stability;
  StabilityReport r;
  if (!gaps.empty()) {
    r.gap_min = *std::min_element(gaps.begin(), gaps.end());
    r.gap_median = median(gaps);
    r.boundary_risk = *r.gap_min < th.boundary_risk_factor * cfg.train.eps_ball;
  }
  r.gate_learned = cfg.model.geometry == Geometry::kMixed;
  if (r.gate_learned) {
    int run = 0;
    for (const EpochRecord& e : epochs) {
      const bool out = e.mean_g < th.collapse_low || e.mean_g > th.collapse_high;
      run = out ? run + 1 : 0;
      if (run >= th.collapse_epochs) r.collapse = true;
    }
  }
  r.ratio_applicable = cfg.model.geometry == Geometry::kMixed;
  if (r.ratio_applicable) {
    std::vector<double> finite;
    for (const EpochRecord& e : epochs) {
      r.ratio_per_epoch.push_back(e.ratio_median);
      if (!e.ratio_median || *e.ratio_median < th.ratio_low || *e.ratio_median > th.ratio_high) {
        r.loss_imbalance = true;
      }
      if (e.ratio_median) finite.push_back(*e.ratio_median);
    }
    if (!finite.empty()) r.ratio_median = median(finite);
  }
  return r;
}

json to_json(const StabilityReport& s) {
  json ratios = json::array();
  for (const auto& v : s.ratio_per_epoch) ratios.push_back(opt_json(v));
  return {{"boundary_gap_min", opt_json(s.gap_min)},
          {"boundary_gap_median", opt_json(s.gap_median)},
          {"ratio_per_epoch", ratios},
          {"ratio_median", opt_json(s.ratio_median)},
          {"gate_learned", s.gate_learned},
          {"ratio_applicable", s.ratio_applicable},
          {"events", {{"collapse", s.collapse}, {"boundary_risk", s.boundary_risk}, {"loss_imbalance", s.loss_imbalance}}}};
}

json checkpoint_metadata(const Config& cfg, std::size_t num_classes, const std::string& cache_hash) {
  return {{"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"num_classes", num_classes},
          {"cache_hash", cache_hash}};
}

TrainResult load_checkpoint(const std::string& stem) {
  const json manifest = checkpoint::read_manifest(stem);
  TrainResult out;
  try {
    const json& meta = manifest.at("metadata");
    out.config = config_from_json(meta.at("config"));
    out.params = AdapterParams::make(out.config.model, meta.at("num_classes").get<std::size_t>(), out.config.train.seed);
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint("checkpoint metadata: " + std::string(e.what()));
  } catch (const InvalidArgument& e) {
    throw IncompatibleCheckpoint("checkpoint metadata: " + std::string(e.what()));
  }
  nn::ParamList list = out.params.params();
  checkpoint::load(stem, list);
  return out;
}

TrainResult train_episode(const data::FeatureCache& cache, const data::Episode& episode, const Config& base,
                          const TrainOptions& options) {
  data::check_episode(episode, cache);
  Config cfg = base;
  cfg.model.feature_dim = static_cast<int>(cache.dim);
  validate(cfg);
  const ModelConfig& mc = cfg.model;
  const TrainConfig& tc = cfg.train;
  const std::size_t k = episode.num_classes();
  const std::vector<std::size_t> support_idx = episode.support_flat();
  const Matrix support_x = cache.rows(support_idx);
  const std::vector<int> support_y = cache.labels_of(support_idx);
  const std::string hash = data::cache_hash(cache);
  const auto wall_start = std::chrono::steady_clock::now();

  TrainResult result;
  result.config = cfg;
  result.params = AdapterParams::make(mc, k, tc.seed);
  AdapterParams& params = result.params;
  nn::ParamList list = params.params();
  optim::OptimState opt = optim::make_state(list, {tc.weight_decay, tc.adam_beta1, tc.adam_beta2, tc.adam_eps});
  const optim::LrSchedule sched{tc.base_lr, tc.warmup_epochs, tc.epochs};

  const double fm_grid_initial = fm_grid_residual(params, support_x, support_y, cfg);
  std::vector<EpochRecord> epochs;
  std::vector<double> gaps;
  std::vector<Matrix> last_good(list.size());
  double initial_loss = 0.0;
  int epoch = 0;
  try {
    for (; epoch < tc.epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = optim::lr_at(sched, epoch);
      const std::vector<std::size_t> order = epoch_order(tc.seed, epoch, support_idx.size());
      const auto bsz = static_cast<std::size_t>(tc.batch);
      std::vector<objective::LossBreakdown> parts;
      std::vector<double> ratios, g_means;
      double grad_sum = 0.0;
      std::optional<FrozenBank> frozen;
      for (std::size_t start = 0, batch = 0; start < order.size(); start += bsz, ++batch) {
        const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bsz)));
        ad::Tape tape;
        const BoundAdapter b = bind(tape, params);
        const bool rebuild = !frozen || tc.prototype_refresh == PrototypeRefresh::kBatch;
        const SupportState s =
            encode_support(b, tape, support_x, support_y, k, cfg, rebuild ? nullptr : &*frozen);
        if (rebuild) frozen = FrozenBank{s.bank.p_h.value(), s.bank.p_e.value()};
        const Matrix t = sample_times(tc.seed, epoch, static_cast<int>(batch), rows.size(), tc.eps_t);
        StepOutput step = batch_objective(b, s, support_y, rows, t, epoch, cfg, true);
        if (epoch == 0 && batch == 0) initial_loss = step.total.breakdown.l_total;
        for (ad::ParamTensor* p : list) p->zero_grad();
        tape.backward(step.total.loss);
        grad_sum += optim::clip_global_norm(list, tc.clip);
        for (std::size_t i = 0; i < list.size(); ++i) last_good[i] = list[i]->value;
        optim::adamw_step(list, opt, rec.lr);
        parts.push_back(step.total.breakdown);
        if (mc.geometry == Geometry::kMixed && step.total.breakdown.l_fm_e > 0.0) {
          ratios.push_back(step.total.breakdown.l_fm_h / step.total.breakdown.l_fm_e);
        }
        g_means.push_back(step.mean_g);
        gaps.insert(gaps.end(), step.gaps.begin(), step.gaps.end());
      }
      const double nb = static_cast<double>(parts.size());
      objective::LossBreakdown& m = rec.loss;
      m = parts.front();
      m.l_fm_h = m.l_fm_e = m.l_fm = m.l_ce = m.l_total = m.mean_m_h = m.mean_m_e = m.mean_beta = 0.0;
      for (const auto& p : parts) {
        m.l_fm_h += p.l_fm_h / nb;
        m.l_fm_e += p.l_fm_e / nb;
        m.l_fm += p.l_fm / nb;
        m.l_ce += p.l_ce / nb;
        m.l_total += p.l_total / nb;
        m.mean_m_h += p.mean_m_h / nb;
        m.mean_m_e += p.mean_m_e / nb;
        m.mean_beta += p.mean_beta / nb;
      }
      rec.grad_norm = grad_sum / nb;
      if (!ratios.empty()) rec.ratio_median = median(ratios);
      rec.mean_g = 0.0;
      for (double g : g_means) rec.mean_g += g / nb;
      if (options.log) {
        json line = {{"epoch", epoch}, {"lr", rec.lr}, {"grad_norm", rec.grad_norm}, {"loss", objective::to_json(m)},
                     {"ratio_median", opt_json(rec.ratio_median)}, {"mean_g", rec.mean_g}};
        *options.log << line.dump() << "\n";
      }
      epochs.push_back(rec);
    }
  } catch (const DivergenceError& e) {
    if (!options.checkpoint_stem.empty()) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (!last_good[i].data.empty()) list[i]->value = last_good[i];
      }
      json meta = checkpoint_metadata(cfg, k, hash);
      meta["diverged_at_epoch"] = epoch;
      checkpoint::write(options.checkpoint_stem, list, meta);
    }
    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
  }

  const std::vector<std::size_t>& query_idx = episode.query;
  const std::vector<int> query_y = cache.labels_of(query_idx);
  const Inference on_query = infer(params, support_x, support_y, cache.rows(query_idx), cfg, true);
  const Inference on_support = infer(params, support_x, support_y, support_x, cfg, false);
  gaps.insert(gaps.end(), on_query.gaps.begin(), on_query.gaps.end());
  const StabilityReport stab = diagnostics(epochs, gaps, cfg);
  const double fm_grid_final = fm_grid_residual(params, support_x, support_y, cfg);

  if (!options.checkpoint_stem.empty()) checkpoint::write(options.checkpoint_stem, list, checkpoint_metadata(cfg, k, hash));

  json ep_json = json::array();
  for (const EpochRecord& e : epochs) {
    ep_json.push_back({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"grad_norm", e.grad_norm},
                       {"loss", objective::to_json(e.loss)},
                       {"ratio_median", opt_json(e.ratio_median)},
                       {"mean_g", e.mean_g}});
  }
  result.report = {{"schema", kReportSchema},
                   {"variant", cfg.variant},
                   {"config", to_json(cfg)},
                   {"config_hash", config_hash(cfg)},
                   {"seed", tc.seed},
                   {"episode", {{"k_shot", episode.k_shot}, {"seed", episode.seed}, {"cache_hash", hash},
                                {"num_classes", k}, {"support", support_idx.size()}, {"query", query_idx.size()}}},
                   {"parameters", params.parameter_count()},
                   {"epochs", ep_json},
                   {"initial_loss", initial_loss},
                   {"final_loss", epochs.back().loss.l_total},
                   {"support_accuracy", accuracy(on_support.predictions, support_y)},
                   {"query_accuracy", accuracy(on_query.predictions, query_y)},
                   {"query_mean_g", on_query.mean_g},
                   {"query_mean_beta", on_query.mean_beta},
                   {"fm_grid_initial", fm_grid_initial},
                   {"fm_grid_final", fm_grid_final},
                   {"stability", to_json(stab)},
                   {"checkpoint", options.checkpoint_label.empty() ? json(nullptr) : json(options.checkpoint_label)}};
  if (options.log) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    *options.log << json{{"event", "done"}, {"wall_clock_s", secs}}.dump() << "\n";
  }
  return result;
}

}  // namespace mcrfm::train
