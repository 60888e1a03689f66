#include "adaptraj/predictor/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::predictor {

using numcore::affine_backward;
using numcore::affine_forward;
using numcore::AffineCache;

void PredictorConfig::validate() const {
  if (past_steps < 2) throw ConfigError("model.past_steps must be >= 2 (heading and masking need two points)");
  if (future_steps < 1) throw ConfigError("model.future_steps must be >= 1");
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("model widths must be positive");
  if (modes == 0) throw ConfigError("model.modes must be >= 1");
  if (token_capacity == 0) throw ConfigError("model.token_capacity must be >= 1");
  if (!(coord_scale > 0.0)) throw ConfigError("model.coord_scale must be > 0");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("model.mask_ratio must lie in (0, 1)");
}

RegressionLoss loss_reg(const Prediction& prediction, const Futures& truth) {
  if (prediction.agent_count() != truth.size()) {
    throw ConfigError("loss_reg: agent count mismatch");
  }
  RegressionLoss out;
  const std::size_t n = truth.size();
  out.best_mode.assign(n, 0);
  out.per_agent.assign(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const auto& modes = prediction.trajectories[a];
    if (modes.empty()) throw ConfigError("loss_reg: agent without modes");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if (modes[k].size() != truth[a].size()) throw ConfigError("loss_reg: horizon mismatch");
      double s = 0.0;
      for (std::size_t j = 0; j < truth[a].size(); ++j) {
        s += std::hypot(modes[k][j].x - truth[a][j].x, modes[k][j].y - truth[a][j].y);
      }
      s /= static_cast<double>(truth[a].size());
      if (s < best) {
        best = s;
        out.best_mode[a] = k;
      }
    }
    out.per_agent[a] = best;
    out.loss += best;
  }
  if (n > 0) out.loss /= static_cast<double>(n);
  return out;
}

double masked_mse(const std::vector<std::vector<Point2>>& reconstructed,
                  const std::vector<std::vector<Point2>>& target,
                  const std::vector<std::vector<bool>>& mask) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    for (std::size_t j = 0; j < mask[a].size(); ++j) {
      if (!mask[a][j]) continue;
      const double dx = reconstructed[a][j].x - target[a][j].x;
      const double dy = reconstructed[a][j].y - target[a][j].y;
      sum += dx * dx + dy * dy;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Predictor::Predictor(PredictorConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  build_layout();
  initialize(seed);
}

void Predictor::build_layout() {
  const auto th2 = 2 * config_.past_steps;
  const auto tf2 = 2 * config_.future_steps;
  const auto e = config_.embed_dim;
  const auto h = config_.hidden_dim;
  fx_w_ = params_.add("f_x", "f_x.weight", {e, th2});
  fx_b_ = params_.add("f_x", "f_x.bias", {e});
  mask_token_ = params_.add("f_x", "f_x.mask_token", {2});
  fy_w_ = params_.add("f_y", "f_y.weight", {e, tf2});
  fy_b_ = params_.add("f_y", "f_y.bias", {e});
  fm_w_ = params_.add("f_m", "f_m.weight", {e, 4});
  fm_b_ = params_.add("f_m", "f_m.bias", {e});
  e1_w_ = params_.add("enc_in", "enc_in.weight", {h, 2 * e});
  e1_b_ = params_.add("enc_in", "enc_in.bias", {h});
  pool_w_ = params_.add("enc_pool", "enc_pool.weight", {h, h});
  pool_b_ = params_.add("enc_pool", "enc_pool.bias", {h});
  e2_w_ = params_.add("enc_out", "enc_out.weight", {h, h});
  e2_b_ = params_.add("enc_out", "enc_out.bias", {h});
  for (std::size_t k = 0; k < config_.modes; ++k) {
    const std::string layer = "dec_" + std::to_string(k);
    head_w_.push_back(params_.add(layer, layer + ".weight", {tf2, h}));
    head_b_.push_back(params_.add(layer, layer + ".bias", {tf2}));
  }
  rec_w_ = params_.add("recon", "recon.weight", {th2, h + e});
  rec_b_ = params_.add("recon", "recon.bias", {th2});
  tokens_ = params_.add("actor_tokens", "actor_tokens.table", {config_.token_capacity, e});
  token_layer_ = params_.registry().owner_of(tokens_);
}

void Predictor::initialize(std::uint64_t seed) {
  numcore::RngStream rng(seed, 0x1A17);
  for (std::size_t i = 0; i < params_.tensor_count(); ++i) {
    auto& t = params_.tensor(i);
    if (i == tokens_) continue;
    if (t.shape.size() == 2) {
      const double sd = config_.init_gain / std::sqrt(static_cast<double>(t.cols()));
      for (auto& v : t.values) v = rng.normal(0.0, sd);
    } else if (i == mask_token_) {
      for (auto& v : t.values) v = rng.normal(0.0, 0.1);
    }
  }
}

void Predictor::check_observation(const Observation& obs) const {
  if (obs.actor_ids.size() != obs.past.size()) {
    throw ConfigError("observation: actor id count does not match agent count");
  }
  for (const auto& p : obs.past) {
    if (p.size() != config_.past_steps) {
      throw ConfigError("observation: past horizon " + std::to_string(p.size()) + " != t_h " +
                        std::to_string(config_.past_steps));
    }
    for (const auto& q : p) {
      if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw NumericError("observation: non-finite position");
    }
  }
}

std::vector<int> Predictor::resolve_tokens(const Observation& obs, bool ttt_mode) {
  std::vector<int> rows(obs.agent_count(), -1);
  if (!ttt_mode) return rows;
  for (std::size_t a = 0; a < obs.agent_count(); ++a) {
    const int id = obs.actor_ids[a];
    const auto it = token_rows_.find(id);
    if (it != token_rows_.end()) {
      rows[a] = it->second;
      continue;
    }
    if (config_.error_on_unknown_actor) {
      throw ConfigError("unknown actor id " + std::to_string(id) + " in TTT mode");
    }
    if (token_rows_.size() >= config_.token_capacity) {
      throw ConfigError("actor token table full (capacity " + std::to_string(config_.token_capacity) + ")");
    }
    const int row = static_cast<int>(token_rows_.size());
    token_rows_.emplace(id, row);
    rows[a] = row;
  }
  return rows;
}

void Predictor::reset_actor_tokens() {
  auto& t = params_.tensor(tokens_);
  std::fill(t.values.begin(), t.values.end(), 0.0);
  token_rows_.clear();
}

bool Predictor::actor_tokens_zero() const {
  const auto& v = params_.tensor(tokens_).values;
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

int Predictor::token_row(int actor_id) const {
  const auto it = token_rows_.find(actor_id);
  return it == token_rows_.end() ? -1 : it->second;
}

Predictor::AgentFrame Predictor::frame_of(const std::vector<Point2>& past) const {
  AgentFrame f;
  f.origin = past.back();
  for (std::size_t j = past.size() - 1; j > 0; --j) {
    const double dx = past[j].x - past[j - 1].x;
    const double dy = past[j].y - past[j - 1].y;
    const double len = std::hypot(dx, dy);
    if (len > 1e-9) {
      f.cos_h = dx / len;
      f.sin_h = dy / len;
      break;
    }
  }
  if (config_.cv_residual && past.size() >= 2) {
    const double dx = past.back().x - past[past.size() - 2].x;
    const double dy = past.back().y - past[past.size() - 2].y;
    f.vx = f.cos_h * dx + f.sin_h * dy;
    f.vy = -f.sin_h * dx + f.cos_h * dy;
  }
  return f;
}

std::vector<double> Predictor::local_past(const AgentFrame& f, const std::vector<Point2>& past) const {
  std::vector<double> out;
  out.reserve(2 * past.size());
  for (const auto& p : past) {
    const double dx = p.x - f.origin.x;
    const double dy = p.y - f.origin.y;
    out.push_back((f.cos_h * dx + f.sin_h * dy) * config_.coord_scale);
    out.push_back((-f.sin_h * dx + f.cos_h * dy) * config_.coord_scale);
  }
  return out;
}

std::vector<double> Predictor::local_future(const AgentFrame& f, const std::vector<Point2>& fut) const {
  return local_past(f, fut);
}

std::vector<double> Predictor::map_features(const AgentFrame& f, const MapContext& m) const {
  // path heading relative to the agent's heading
  const double s = m.sin_heading * f.cos_h - m.cos_heading * f.sin_h;
  const double c = m.cos_heading * f.cos_h + m.sin_heading * f.sin_h;
  return {s, c, m.curvature * config_.curvature_scale, m.arc_position};
}

void Predictor::add_token(std::vector<double>& h, int row) const {
  if (row < 0) return;
  const auto& table = params_.tensor(tokens_).values;
  const std::size_t e = config_.embed_dim;
  for (std::size_t i = 0; i < e; ++i) h[i] += table[static_cast<std::size_t>(row) * e + i];
}

std::vector<std::vector<double>> Predictor::encode(const std::vector<std::vector<double>>& xin,
                                                   const std::vector<std::vector<double>>& min,
                                                   const std::vector<int>& rows,
                                                   EncoderCache& cache) const {
  const std::size_t n = xin.size();
  const std::size_t e = config_.embed_dim;
  const std::size_t h = config_.hidden_dim;
  cache.fx.assign(n, {});
  cache.fm.assign(n, {});
  cache.e1.assign(n, {});
  cache.e2.assign(n, {});
  cache.u1.assign(n, {});
  cache.feat.assign(n, {});
  cache.hx.assign(n, {});
  std::vector<double> pooled(h, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    auto hx = affine_forward(xin[a], params_.tensor(fx_w_), params_.tensor(fx_b_), &cache.fx[a]);
    add_token(hx, rows[a]);
    const auto hm = affine_forward(min[a], params_.tensor(fm_w_), params_.tensor(fm_b_), &cache.fm[a]);
    std::vector<double> z(2 * e);
    std::copy(hx.begin(), hx.end(), z.begin());
    std::copy(hm.begin(), hm.end(), z.begin() + static_cast<std::ptrdiff_t>(e));
    auto u = affine_forward(z, params_.tensor(e1_w_), params_.tensor(e1_b_), &cache.e1[a]);
    for (auto& v : u) v = std::tanh(v);
    for (std::size_t i = 0; i < h; ++i) pooled[i] += u[i];
    cache.u1[a] = std::move(u);
    cache.hx[a] = std::move(hx);
  }
  if (n == 0) return {};
  for (auto& v : pooled) v /= static_cast<double>(n);
  const auto mixed = affine_forward(pooled, params_.tensor(pool_w_), params_.tensor(pool_b_), &cache.pool);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> q(cache.u1[a]);
    for (std::size_t i = 0; i < h; ++i) q[i] += mixed[i];
    auto f = affine_forward(q, params_.tensor(e2_w_), params_.tensor(e2_b_), &cache.e2[a]);
    for (auto& v : f) v = std::tanh(v);
    cache.feat[a] = std::move(f);
  }
  return cache.feat;
}

std::vector<std::vector<double>> Predictor::encode_backward(const std::vector<std::vector<double>>& dfeat,
                                                            const std::vector<int>& rows,
                                                            EncoderCache& cache) {
  const std::size_t n = dfeat.size();
  const std::size_t e = config_.embed_dim;
  const std::size_t h = config_.hidden_dim;
  auto& tokens = params_.tensor(tokens_);
  std::vector<std::vector<double>> dq(n);
  std::vector<double> dmixed(h, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> dpre(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double f = cache.feat[a][i];
      dpre[i] = dfeat[a][i] * (1.0 - f * f);
    }
    dq[a] = affine_backward(dpre, cache.e2[a], params_.tensor(e2_w_), params_.tensor(e2_b_));
    for (std::size_t i = 0; i < h; ++i) dmixed[i] += dq[a][i];
  }
  std::vector<double> dpooled(h, 0.0);
  if (n > 0) dpooled = affine_backward(dmixed, cache.pool, params_.tensor(pool_w_), params_.tensor(pool_b_));
  std::vector<std::vector<double>> dxin(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> dpre(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double u = cache.u1[a][i];
      const double du = dq[a][i] + dpooled[i] / static_cast<double>(n);
      dpre[i] = du * (1.0 - u * u);
    }
    const auto dz = affine_backward(dpre, cache.e1[a], params_.tensor(e1_w_), params_.tensor(e1_b_));
    const std::vector<double> dhx(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(e));
    const std::vector<double> dhm(dz.begin() + static_cast<std::ptrdiff_t>(e), dz.end());
    affine_backward(dhm, cache.fm[a], params_.tensor(fm_w_), params_.tensor(fm_b_));
    if (rows[a] >= 0) {
      for (std::size_t i = 0; i < e; ++i)
        tokens.grad[static_cast<std::size_t>(rows[a]) * e + i] += dhx[i];
    }
    dxin[a] = affine_backward(dhx, cache.fx[a], params_.tensor(fx_w_), params_.tensor(fx_b_));
  }
  return dxin;
}

Embedding Predictor::embed_inputs(const Observation& obs, const Futures* futures, bool ttt_mode) {
  check_observation(obs);
  const auto rows = resolve_tokens(obs, ttt_mode);
  Embedding out;
  for (std::size_t a = 0; a < obs.agent_count(); ++a) {
    const auto f = frame_of(obs.past[a]);
    auto hx = affine_forward(local_past(f, obs.past[a]), params_.tensor(fx_w_), params_.tensor(fx_b_));
    add_token(hx, rows[a]);
    out.h_x.push_back(std::move(hx));
    out.h_m.push_back(affine_forward(map_features(f, obs.map), params_.tensor(fm_w_), params_.tensor(fm_b_)));
    if (futures != nullptr) {
      auto hy = affine_forward(local_future(f, futures->at(a)), params_.tensor(fy_w_), params_.tensor(fy_b_));
      add_token(hy, rows[a]);
      out.h_y.push_back(std::move(hy));
    }
  }
  return out;
}

Prediction Predictor::predict(const Observation& obs, bool ttt_mode) {
  check_observation(obs);
  const auto rows = resolve_tokens(obs, ttt_mode);
  const std::size_t n = obs.agent_count();
  std::vector<AgentFrame> frames(n);
  std::vector<std::vector<double>> xin(n), min(n);
  for (std::size_t a = 0; a < n; ++a) {
    frames[a] = frame_of(obs.past[a]);
    xin[a] = local_past(frames[a], obs.past[a]);
    min[a] = map_features(frames[a], obs.map);
  }
  EncoderCache cache;
  const auto feat = encode(xin, min, rows, cache);
  Prediction pred;
  pred.trajectories.resize(n);
  const double inv = 1.0 / config_.coord_scale;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& f = frames[a];
    pred.trajectories[a].resize(config_.modes);
    for (std::size_t k = 0; k < config_.modes; ++k) {
      const auto out = affine_forward(feat[a], params_.tensor(head_w_[k]), params_.tensor(head_b_[k]));
      auto& traj = pred.trajectories[a][k];
      traj.resize(config_.future_steps);
      for (std::size_t j = 0; j < config_.future_steps; ++j) {
        const double steps = static_cast<double>(j + 1);
        const double lx = out[2 * j] * inv + steps * f.vx;
        const double ly = out[2 * j + 1] * inv + steps * f.vy;
        traj[j] = {f.origin.x + f.cos_h * lx - f.sin_h * ly, f.origin.y + f.sin_h * lx + f.cos_h * ly};
      }
    }
  }
  return pred;
}

MaeLossBreakdown Predictor::loss_mae(const Observation& obs, const Futures& futures, bool ttt_mode,
                                     numcore::RngStream& mask_rng) {
  check_observation(obs);
  const std::size_t n = obs.agent_count();
  if (futures.size() != n) throw ConfigError("loss_mae: futures/agent count mismatch");
  for (const auto& f : futures) {
    if (f.size() != config_.future_steps) throw ConfigError("loss_mae: future horizon mismatch");
  }
  cache_ = LossCache{};
  auto& c = cache_;
  c.ttt_mode = ttt_mode;
  c.agents = n;
  c.token_rows = resolve_tokens(obs, ttt_mode);
  c.frames.resize(n);
  std::vector<std::vector<double>> xin(n), min(n), yin(n);
  for (std::size_t a = 0; a < n; ++a) {
    c.frames[a] = frame_of(obs.past[a]);
    xin[a] = local_past(c.frames[a], obs.past[a]);
    min[a] = map_features(c.frames[a], obs.map);
    yin[a] = local_future(c.frames[a], futures[a]);
  }

  MaeLossBreakdown out;
  if (n == 0) {
    c.valid = true;
    return out;
  }

  // Regression branch: winner-takes-all over mode heads.
  const auto feat = encode(xin, min, c.token_rows, c.clean);
  const double inv = 1.0 / config_.coord_scale;
  const std::size_t tf = config_.future_steps;
  c.heads.assign(n, std::vector<AffineCache>(config_.modes));
  c.best_mode.assign(n, 0);
  c.head_grad.assign(n, {});
  double reg = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& f = c.frames[a];
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_grad;
    for (std::size_t k = 0; k < config_.modes; ++k) {
      const auto o = affine_forward(feat[a], params_.tensor(head_w_[k]), params_.tensor(head_b_[k]), &c.heads[a][k]);
      double s = 0.0;
      std::vector<double> g(2 * tf, 0.0);
      for (std::size_t j = 0; j < tf; ++j) {
        const double steps = static_cast<double>(j + 1);
        const double lx = o[2 * j] * inv + steps * f.vx;
        const double ly = o[2 * j + 1] * inv + steps * f.vy;
        const double px = f.origin.x + f.cos_h * lx - f.sin_h * ly;
        const double py = f.origin.y + f.sin_h * lx + f.cos_h * ly;
        const double dx = px - futures[a][j].x;
        const double dy = py - futures[a][j].y;
        const double d = std::hypot(dx, dy);
        s += d;
        if (d > 0.0) {
          // d(dist)/d(out) = inv * R^T (dx, dy) / d
          g[2 * j] = inv * (f.cos_h * dx + f.sin_h * dy) / d;
          g[2 * j + 1] = inv * (-f.sin_h * dx + f.cos_h * dy) / d;
        }
      }
      s /= static_cast<double>(tf);
      if (s < best) {
        best = s;
        c.best_mode[a] = k;
        best_grad = std::move(g);
      }
    }
    const double scale = 1.0 / (static_cast<double>(tf) * static_cast<double>(n));
    for (auto& v : best_grad) v *= scale;
    c.head_grad[a] = std::move(best_grad);
    reg += best;
  }
  reg /= static_cast<double>(n);

  // Reconstruction branch on the masked past.
  const std::size_t th = config_.past_steps;
  const auto masked_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config_.mask_ratio * static_cast<double>(th))), 1, th);
  c.mask.assign(n, std::vector<bool>(th, false));
  auto xmask = xin;
  const auto& token = params_.tensor(mask_token_).values;
  // One draw per call keys per-actor streams, so the mask an agent receives
  // does not depend on its position in the observation.
  const std::uint64_t mask_key = mask_rng.next_u64();
  for (std::size_t a = 0; a < n; ++a) {
    numcore::RngStream agent_rng(mask_key, static_cast<std::uint64_t>(static_cast<std::int64_t>(obs.actor_ids[a])));
    std::vector<std::size_t> idx(th);
    for (std::size_t j = 0; j < th; ++j) idx[j] = j;
    for (std::size_t m = 0; m < masked_count; ++m) {
      const auto pick = m + static_cast<std::size_t>(agent_rng.uniform_index(th - m));
      std::swap(idx[m], idx[pick]);
      c.mask[a][idx[m]] = true;
      xmask[a][2 * idx[m]] = token[0];
      xmask[a][2 * idx[m] + 1] = token[1];
    }
  }
  const auto mfeat = encode(xmask, min, c.token_rows, c.masked);
  const std::size_t e = config_.embed_dim;
  const std::size_t h = config_.hidden_dim;
  c.fy.assign(n, {});
  c.rec.assign(n, {});
  c.rec_grad.assign(n, {});
  const double total_masked = static_cast<double>(masked_count * n);
  double recon = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    auto hy = affine_forward(yin[a], params_.tensor(fy_w_), params_.tensor(fy_b_), &c.fy[a]);
    add_token(hy, c.token_rows[a]);
    std::vector<double> rin(h + e);
    std::copy(mfeat[a].begin(), mfeat[a].end(), rin.begin());
    std::copy(hy.begin(), hy.end(), rin.begin() + static_cast<std::ptrdiff_t>(h));
    const auto r = affine_forward(rin, params_.tensor(rec_w_), params_.tensor(rec_b_), &c.rec[a]);
    std::vector<double> g(2 * th, 0.0);
    for (std::size_t j = 0; j < th; ++j) {
      if (!c.mask[a][j]) continue;
      const double dx = r[2 * j] - xin[a][2 * j];
      const double dy = r[2 * j + 1] - xin[a][2 * j + 1];
      recon += dx * dx + dy * dy;
      g[2 * j] = 2.0 * dx / total_masked;
      g[2 * j + 1] = 2.0 * dy / total_masked;
    }
    c.rec_grad[a] = std::move(g);
  }
  recon /= total_masked;

  out.reg = reg;
  out.recon = recon;
  out.total = reg + recon;
  out.best_mode_index = c.best_mode;
  c.valid = true;
  return out;
}

numcore::LayerVectors Predictor::backward() {
  if (!cache_.valid) throw UsageError("backward: no cached loss_mae forward");
  params_.zero_grad();
  auto& c = cache_;
  c.valid = false;
  const std::size_t n = c.agents;
  if (n == 0) return params_.layer_grads();
  const std::size_t e = config_.embed_dim;
  const std::size_t h = config_.hidden_dim;
  auto& tokens = params_.tensor(tokens_);

  // regression path
  std::vector<std::vector<double>> dfeat(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto k = c.best_mode[a];
    dfeat[a] = affine_backward(c.head_grad[a], c.heads[a][k], params_.tensor(head_w_[k]), params_.tensor(head_b_[k]));
  }
  encode_backward(dfeat, c.token_rows, c.clean);

  // reconstruction path
  std::vector<std::vector<double>> dmfeat(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto drin = affine_backward(c.rec_grad[a], c.rec[a], params_.tensor(rec_w_), params_.tensor(rec_b_));
    dmfeat[a].assign(drin.begin(), drin.begin() + static_cast<std::ptrdiff_t>(h));
    const std::vector<double> dhy(drin.begin() + static_cast<std::ptrdiff_t>(h), drin.end());
    if (c.token_rows[a] >= 0) {
      for (std::size_t i = 0; i < e; ++i)
        tokens.grad[static_cast<std::size_t>(c.token_rows[a]) * e + i] += dhy[i];
    }
    affine_backward(dhy, c.fy[a], params_.tensor(fy_w_), params_.tensor(fy_b_));
  }
  const auto dxmask = encode_backward(dmfeat, c.token_rows, c.masked);
  auto& mt = params_.tensor(mask_token_).grad;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t j = 0; j < config_.past_steps; ++j) {
      if (!c.mask[a][j]) continue;
      mt[0] += dxmask[a][2 * j];
      mt[1] += dxmask[a][2 * j + 1];
    }
  }
  return params_.layer_grads();
}

}  // namespace adaptraj::predictor
