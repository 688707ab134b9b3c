#pragma once

#include <textim/motion.hpp>

#include "json.hpp"

#include <string>
#include <vector>

namespace textim {

// Frame-wise residual MLP f(x_t, t, c) predicting clean motion. Widths are
// configuration; the spatial condition exists only for stage-2 models.
struct DenoiserConfig {
  Index pose_dim = 263;
  Index width = 128;
  int depth = 4;
  Index cond_width = 64;   // projected width of each condition
  Index text_width = 64;   // raw text/instruction embedding width
  Index time_width = 16;   // sinusoidal and projected time width, even
  bool has_spatial = false;
  Index spatial_dim = 0;   // raw spatial feature width when has_spatial

  int conditionCount() const { return has_spatial ? 4 : 3; }
  Index inputDim() const {
    return pose_dim + time_width + cond_width * conditionCount();
  }
  void validate() const;
};

nlohmann::json denoiserConfigToJson(const DenoiserConfig& config);
DenoiserConfig denoiserConfigFromJson(const nlohmann::json& doc);

struct Linear {
  Matrix W;
  Vector b;
};

// y = W x + b.
Vector affineApply(const Linear& layer, const Vector& x);

struct DenoiserParams {
  DenoiserConfig config;
  Linear input;                // width x inputDim
  std::vector<Linear> blocks;  // depth, each width x width, residual
  Linear output;               // pose_dim x width
  Linear time_proj;            // time_width x time_width
  Linear mask_proj;            // cond_width x pose_dim
  Linear text_proj;            // cond_width x text_width, shared by the
                               // text and instruction conditions
  Linear spatial_proj;         // cond_width x spatial_dim, stage 2 only
};

// Uniform fan-in initialization, biases zero, reproducible from the rng.
DenoiserParams initDenoiser(const DenoiserConfig& config, Rng& rng);
DenoiserParams zerosLike(const DenoiserParams& params);
std::vector<TensorRef> tensorRefs(DenoiserParams& params);
Index parameterCount(const DenoiserParams& params);

// Raw inputs of the four conditions plus their dropout flags. A dropped
// condition's raw input is replaced by zeros before projection, so the
// network output cannot depend on its contents.
struct ConditionBundle {
  Vector text_embedding;         // text_width
  Vector mask_bits;              // pose_dim, 0/1 values
  Vector instruction_embedding;  // text_width
  Vector spatial_feature;        // spatial_dim when the model has_spatial
  bool drop_text = false;
  bool drop_mask = false;
  bool drop_instruction = false;
  bool drop_spatial = false;

  // Copy with every dropout flag set: the unconditional branch.
  ConditionBundle dropped() const;
};

// Sinusoidal embedding; deterministic, components in [-1, 1].
Vector timeEmbed(int t, Index t_steps, Index width);

// Learnable affine projection of the mask bits.
Vector maskProject(const Linear& proj, const Vector& bits);

// Intermediate activations kept for the manual backward pass.
struct ForwardCache {
  Vector time_raw, mask_in, text_in, instr_in, spatial_in;
  Vector time_vec, mask_vec, text_vec, instr_vec, spatial_vec;
  Matrix U;               // inputDim x T, one column per frame
  std::vector<Matrix> H;  // depth+1 hidden states, width x T
  std::vector<Matrix> Z;  // depth pre-activations, width x T
};

Matrix predictX0(const DenoiserParams& params, const Matrix& x_t, int t,
                 Index t_steps, const ConditionBundle& conds);
Matrix predictX0WithCache(const DenoiserParams& params, const Matrix& x_t,
                          int t, Index t_steps, const ConditionBundle& conds,
                          ForwardCache& cache);

// Gradients w.r.t. the raw condition inputs; zero where the condition was
// dropped (the output cannot depend on a dropped input).
struct CondGrads {
  Vector text, mask, instruction, spatial;
};

// Accumulates parameter gradients for one forward pass into `grads` given
// dL/d(output); returns raw-condition gradients.
CondGrads backpropDenoiser(const DenoiserParams& params,
                           const ConditionBundle& conds,
                           const ForwardCache& cache, const Matrix& d_out,
                           DenoiserParams& grads);

struct DiffusionItem {
  Matrix x0;   // T x pose_dim
  Matrix x_t;  // forward-sampled at step t
  int t = 1;
  ConditionBundle conds;
};

struct Stage2Item {
  DiffusionItem base;
  Matrix x_inter;       // full-dim; only mask dims are consumed
  IntVector mask_bits;  // m: dims overwritten from x_inter
};

struct DenoiserLoss {
  double loss = 0.0;
  DenoiserParams grads;
  std::vector<CondGrads> cond_grads;  // one per batch item
};

// Mean squared error over all dims: mean over items of mean over (T x D).
DenoiserLoss stage1Loss(const DenoiserParams& params,
                        const std::vector<DiffusionItem>& batch,
                        Index t_steps);

// ||compose_overwrite(x0_hat, x_inter, m) - x0||^2 with the same
// normalization; gradients on mask dims of the prediction are exactly zero.
DenoiserLoss stage2Loss(const DenoiserParams& params,
                        const std::vector<Stage2Item>& batch, Index t_steps);

// Optimizers over named tensor lists. A non-finite gradient rejects the
// whole step and reports which tensor failed.
struct StepOutcome {
  bool applied = false;
  std::string diagnostic;
};

StepOutcome sgdStep(const std::vector<TensorRef>& params,
                    const std::vector<TensorRef>& grads, double lr);

struct AdamState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  long step = 0;

  static AdamState forTensors(const std::vector<TensorRef>& params);
};

StepOutcome adamStep(AdamState& state, const std::vector<TensorRef>& params,
                     const std::vector<TensorRef>& grads, double lr,
                     double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8);

}  // namespace textim
