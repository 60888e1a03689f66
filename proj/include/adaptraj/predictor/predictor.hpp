#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "adaptraj/numcore/affine.hpp"
#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/numcore/tensor.hpp"
#include "adaptraj/predictor/sample.hpp"

namespace adaptraj::predictor {

using ModelParams = numcore::ParameterSet;

struct PredictorConfig {
  std::size_t past_steps = 4;     // t_h
  std::size_t future_steps = 12;  // t_f
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t modes = 6;
  std::size_t token_capacity = 16;  // actor-token rows per scene
  double coord_scale = 0.1;         // meters -> network units
  double curvature_scale = 50.0;
  double mask_ratio = 0.5;
  double init_gain = 1.0;
  bool cv_residual = true;  // heads predict offsets from constant-velocity extrapolation
  bool error_on_unknown_actor = false;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// [agent][mode][step] predicted positions in the scene frame (meters).
struct Prediction {
  std::vector<std::vector<std::vector<Point2>>> trajectories;

  std::size_t agent_count() const { return trajectories.size(); }
};

struct RegressionLoss {
  double loss = 0.0;
  std::vector<std::size_t> best_mode;
  std::vector<double> per_agent;
};

/// Winner-takes-all: per agent, the smallest mean L2 displacement among
/// modes; ties go to the lowest mode index. Loss is the mean over agents.
RegressionLoss loss_reg(const Prediction& prediction, const Futures& truth);

/// Mean squared L2 error over masked points only.
double masked_mse(const std::vector<std::vector<Point2>>& reconstructed,
                  const std::vector<std::vector<Point2>>& target,
                  const std::vector<std::vector<bool>>& mask);

struct MaeLossBreakdown {
  double reg = 0.0;
  double recon = 0.0;
  double total = 0.0;
  std::vector<std::size_t> best_mode_index;
};

/// Per-agent embedded features (network units).
struct Embedding {
  std::vector<std::vector<double>> h_x;
  std::vector<std::vector<double>> h_y;  // empty when no futures supplied
  std::vector<std::vector<double>> h_m;
};

/// Small masked-autoencoding trajectory predictor with explicit backprop:
/// past/future/map embeddings, a two-layer tanh encoder with a mean-pool
/// interaction layer, K affine mode heads, a reconstruction head and an
/// additive per-actor token table used only in TTT mode.
class Predictor {
 public:
  Predictor(PredictorConfig config, std::uint64_t seed);

  const PredictorConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  Embedding embed_inputs(const Observation& obs, const Futures* futures, bool ttt_mode);

  Prediction predict(const Observation& obs, bool ttt_mode);

  /// L_reg + L_recon on one sample. Masks are drawn from `mask_rng`; caches
  /// the forward pass for backward().
  MaeLossBreakdown loss_mae(const Observation& obs, const Futures& futures, bool ttt_mode,
                            numcore::RngStream& mask_rng);

  /// Zeroes every grad buffer, back-propagates the last loss_mae call and
  /// returns the per-layer flattened gradient. UsageError without a cached
  /// forward; a cache is consumed by one backward.
  numcore::LayerVectors backward();

  /// Zero the actor-token table and forget the id->row assignment.
  void reset_actor_tokens();
  bool actor_tokens_zero() const;
  /// Row assigned to an actor id, or -1.
  int token_row(int actor_id) const;

  std::size_t token_layer() const { return token_layer_; }

 private:
  struct AgentFrame {
    Point2 origin;
    double cos_h = 1.0;
    double sin_h = 0.0;
    double vx = 0.0, vy = 0.0;  // last displacement, local frame
  };

  struct EncoderCache {
    std::vector<numcore::AffineCache> fx, fm, e1, e2;
    numcore::AffineCache pool;
    std::vector<std::vector<double>> u1, feat, hx;
  };

  struct LossCache {
    bool valid = false;
    bool ttt_mode = false;
    std::size_t agents = 0;
    std::vector<AgentFrame> frames;
    std::vector<int> token_rows;
    EncoderCache clean;
    std::vector<std::vector<numcore::AffineCache>> heads;  // [agent][mode]
    std::vector<std::vector<double>> head_grad;            // dL/d(best head output)
    std::vector<std::size_t> best_mode;
    EncoderCache masked;
    std::vector<std::vector<bool>> mask;
    std::vector<numcore::AffineCache> fy, rec;
    std::vector<std::vector<double>> rec_grad;
  };

  void build_layout();
  void initialize(std::uint64_t seed);
  void check_observation(const Observation& obs) const;
  std::vector<int> resolve_tokens(const Observation& obs, bool ttt_mode);
  AgentFrame frame_of(const std::vector<Point2>& past) const;
  std::vector<double> local_past(const AgentFrame& f, const std::vector<Point2>& past) const;
  std::vector<double> local_future(const AgentFrame& f, const std::vector<Point2>& fut) const;
  std::vector<double> map_features(const AgentFrame& f, const MapContext& m) const;
  void add_token(std::vector<double>& h, int row) const;

  std::vector<std::vector<double>> encode(const std::vector<std::vector<double>>& xin,
                                          const std::vector<std::vector<double>>& min,
                                          const std::vector<int>& rows, EncoderCache& cache) const;
  std::vector<std::vector<double>> encode_backward(const std::vector<std::vector<double>>& dfeat,
                                                   const std::vector<int>& rows, EncoderCache& cache);

  PredictorConfig config_;
  ModelParams params_;
  std::map<int, int> token_rows_;
  LossCache cache_;

  // tensor indices
  std::size_t fx_w_, fx_b_, mask_token_, fy_w_, fy_b_, fm_w_, fm_b_;
  std::size_t e1_w_, e1_b_, pool_w_, pool_b_, e2_w_, e2_b_;
  std::vector<std::size_t> head_w_, head_b_;
  std::size_t rec_w_, rec_b_, tokens_;
  std::size_t token_layer_ = 0;
};

}  // namespace adaptraj::predictor
