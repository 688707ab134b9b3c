#pragma once

#include <textim/denoiser.hpp>
#include <textim/diffusion.hpp>
#include <textim/part_gcn.hpp>
#include <textim/semantics.hpp>
#include <textim/text_encoder.hpp>

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace textim {

// Clean-motion estimate for the current iterate, called once per step.
using DenoiseFn = std::function<Matrix(const Matrix& x_t, int t)>;

// Optional projection of the estimate before the posterior draw; the final
// stage overwrites interactive dims here so they survive to the output.
using PostStepFn = std::function<Matrix(const Matrix& x0_hat, int t)>;

struct StepDiagnostic {
  int t = 0;
  double estimate_norm = 0.0;  // Frobenius norm of the (projected) estimate
  double iterate_norm = 0.0;   // norm of the iterate after the step
};

// Full reverse chain from Gaussian noise. At t == 1 the posterior mean is
// the estimate itself, so the (projected) estimate is returned directly and
// any constraint imposed by `post_step` holds bit-exactly in the output.
Matrix reverseSample(const DenoiseFn& denoise,
                     const DiffusionSchedule& schedule, Index num_frames,
                     Index dim, Rng& rng, bool stochastic,
                     const PostStepFn& post_step = nullptr,
                     std::vector<StepDiagnostic>* diagnostics = nullptr);

// Generative schedule parameters; the derived schedule is rebuilt on use so
// checkpoints stay exact.
struct ScheduleSpec {
  Index t_steps = 50;
  double beta_start = 0.005;
  double beta_end = 0.2;

  DiffusionSchedule make() const {
    return makeSchedule(t_steps, beta_start, beta_end);
  }
};

struct GenerationRequest {
  std::string text;
  std::uint64_t seed = 0;
  Index num_frames = 24;
  double guidance_scale = 2.0;
  bool two_stage = true;   // false forces the single-stage path
  bool stochastic = true;  // false makes every reverse step deterministic
};

// Shared fixtures for generation and training.
struct GenerationContext {
  const TextEncoder& encoder;
  DiffusionSchedule schedule;
  PoseLayout layout;
  Skeleton skeleton;
};

// Two networks plus the spatial-coherence module: the first stage generates
// interactive parts, the second completes the remaining body.
struct PipelineParams {
  DenoiserParams stage1;  // three conditions: text, part mask, instruction
  DenoiserParams stage2;  // adds the spatial condition
  GcnParams gcn;
};

struct PipelineConfig {
  DenoiserConfig stage1;
  DenoiserConfig stage2;
  GcnConfig gcn;

  // Stage 1 must not take a spatial input; stage 2 must, with width equal
  // to the graph module's feature size; pose and text widths must agree.
  void validate() const;
};

PipelineParams initPipeline(const PipelineConfig& config,
                            const Skeleton& skeleton, Rng& rng);

struct GenerationTrace {
  InteractionSpec spec;
  PartMask mask;           // empty part set on the single-stage path
  Matrix x_inter;          // first-stage output; 0x0 on the single-stage path
  Vector spatial_feature;  // empty on the single-stage path
  MotionSequence motion;
  std::vector<StepDiagnostic> stage1_steps;
  std::vector<StepDiagnostic> stage2_steps;
};

// Trace summary for inspection: spec, mask size, per-step norms. The motion
// itself is serialized separately.
nlohmann::json traceToJson(const GenerationTrace& trace);

// Reverse-samples the interactive motion with guided estimates
// (unconditional + scale * (conditional - unconditional)). Conditions: full
// text, part mask, interaction instruction. Only mask dims are consumed
// downstream.
Matrix stage1Generate(const GenerationRequest& request,
                      const InteractionSpec& spec,
                      const DenoiserParams& params,
                      const GenerationContext& ctx, Rng& rng,
                      std::vector<StepDiagnostic>* diagnostics = nullptr);

// Completes the remaining body around x_inter. Conditions: full text, the
// reversed mask 1 - m, the residual (non-interaction) instruction, and the
// flattened part-similarity feature of the masked interactive motion. After
// every step the estimate's mask dims are overwritten from x_inter, so the
// output's mask dims equal x_inter bit-exactly.
Matrix stage2Generate(const GenerationRequest& request,
                      const InteractionSpec& spec, const Matrix& x_inter,
                      const PartMask& mask, const DenoiserParams& params,
                      const GcnParams& gcn, const GenerationContext& ctx,
                      Rng& rng, Vector* spatial_out = nullptr,
                      std::vector<StepDiagnostic>* diagnostics = nullptr);

using ExtractorFn = std::function<InteractionSpec(const std::string&)>;

// Extracts the interaction spec, then routes: a 'none' spec (or a disabled
// two-stage toggle) runs the second-stage network once with only the text
// condition active and never touches stage 1 or the graph module; anything
// else runs both stages. Deterministic in (request, params).
GenerationTrace generate(const GenerationRequest& request,
                         const ExtractorFn& extractor,
                         const PipelineParams& params,
                         const GenerationContext& ctx);

struct TrainItem {
  MotionSequence motion;
  std::string caption;
  InteractionSpec spec;
};

struct TrainConfig {
  int steps = 200;
  Index batch_size = 4;
  double lr = 1e-3;
  double cond_dropout = 0.1;  // chance of dropping all conditions at once
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // one recorded loss per step
};

// First-stage training: interactive items only, loss restricted to mask
// dims (ground truth fills the rest, so their error and gradients are
// exactly zero). Conditions match stage1Generate; with probability
// cond_dropout all of an item's conditions are dropped together, which
// trains the unconditional branch used for guidance.
TrainResult trainStage1(DenoiserParams& params,
                        const std::vector<TrainItem>& dataset,
                        const TrainConfig& config,
                        const GenerationContext& ctx);

// Joint loss over one prepared batch: the graph module's feature feeds the
// spatial condition, so its weights receive gradients through the denoiser.
// gcn_inputs[i] holds the masked interactive frames for item i; an empty
// matrix skips the graph forward (item's spatial condition dropped).
struct Stage2JointLoss {
  double loss = 0.0;
  DenoiserParams denoiser_grads;
  GcnGrads gcn_grads;
  std::vector<CondGrads> cond_grads;
};

Stage2JointLoss stage2JointLoss(const DenoiserParams& params,
                                const GcnParams& gcn,
                                const std::vector<Stage2Item>& batch,
                                const std::vector<Matrix>& gcn_inputs,
                                Index t_steps, const PoseLayout& layout);

// Second-stage training with teacher forcing: the interactive motion is the
// ground truth masked to the item's interactive dims. Denoiser and graph
// parameters update in one joint optimizer step. Items with a 'none' spec
// train the text-only path (mask, instruction and spatial dropped).
TrainResult trainStage2(DenoiserParams& params, GcnParams& gcn,
                        const std::vector<TrainItem>& dataset,
                        const TrainConfig& config,
                        const GenerationContext& ctx);

// Checkpoint: both stages, the graph module, and the schedule parameters in
// one self-describing file.
void writePipelineCheckpoint(const std::string& path, PipelineParams& params,
                             const ScheduleSpec& schedule);

struct PipelineCheckpoint {
  PipelineParams params;
  ScheduleSpec schedule;
};

PipelineCheckpoint readPipelineCheckpoint(const std::string& path,
                                          const Skeleton& skeleton);

}  // namespace textim
