#include <textim/pipeline.hpp>

#include <textim/io.hpp>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace textim {

namespace {

// Guided estimate: unconditional + scale * (conditional - unconditional).
// The endpoint scales run a single prediction, so they are exact.
DenoiseFn guidedDenoiser(const DenoiserParams& params,
                         const ConditionBundle& conds, double scale,
                         Index t_steps) {
  ConditionBundle uncond = conds.dropped();
  return [&params, conds, uncond, scale, t_steps](const Matrix& x, int t) {
    if (scale == 1.0) return predictX0(params, x, t, t_steps, conds);
    if (scale == 0.0) return predictX0(params, x, t, t_steps, uncond);
    Matrix u = predictX0(params, x, t, t_steps, uncond);
    Matrix c = predictX0(params, x, t, t_steps, conds);
    return cfgCombine(u, c, scale);
  };
}

void checkStageParams(const DenoiserParams& params,
                      const GenerationContext& ctx, bool spatial,
                      const char* what) {
  require(params.config.has_spatial == spatial,
          std::string(what) + ": wrong condition set for this stage");
  require(params.config.pose_dim == ctx.layout.total_dim,
          std::string(what) + ": params do not match the pose layout");
  require(ctx.encoder.width() == params.config.text_width,
          std::string(what) + ": text encoder width mismatch");
}

}  // namespace

Matrix reverseSample(const DenoiseFn& denoise,
                     const DiffusionSchedule& schedule, Index num_frames,
                     Index dim, Rng& rng, bool stochastic,
                     const PostStepFn& post_step,
                     std::vector<StepDiagnostic>* diagnostics) {
  require(static_cast<bool>(denoise), "reverseSample: missing denoiser");
  require(num_frames >= 1 && dim >= 1, "reverseSample: empty shape");

  Matrix x = rng.normalMatrix(num_frames, dim);
  for (int t = static_cast<int>(schedule.steps()); t >= 1; --t) {
    Matrix x0_hat = denoise(x, t);
    require(x0_hat.rows() == num_frames && x0_hat.cols() == dim,
            "reverseSample: estimate shape mismatch");
    if (post_step) x0_hat = post_step(x0_hat, t);
    double estimate_norm = x0_hat.norm();
    // The t == 1 posterior mean is the estimate itself; returning it
    // directly keeps post-step constraints bit-exact in the output.
    if (t == 1)
      x = std::move(x0_hat);
    else
      x = reverseStep(x, x0_hat, t, schedule, rng, stochastic);
    if (diagnostics)
      diagnostics->push_back({t, estimate_norm, x.norm()});
  }
  return x;
}

void PipelineConfig::validate() const {
  stage1.validate();
  stage2.validate();
  gcn.validate();
  require(!stage1.has_spatial,
          "pipeline config: stage 1 must not take a spatial input");
  require(stage2.has_spatial,
          "pipeline config: stage 2 needs the spatial input");
  require(stage2.spatial_dim == gcn.spatialDim(),
          "pipeline config: spatial width must equal the graph feature size");
  require(stage1.pose_dim == stage2.pose_dim,
          "pipeline config: stages disagree on pose width");
  require(stage1.text_width == stage2.text_width,
          "pipeline config: stages disagree on text width");
}

PipelineParams initPipeline(const PipelineConfig& config,
                            const Skeleton& skeleton, Rng& rng) {
  config.validate();
  PipelineParams params;
  params.stage1 = initDenoiser(config.stage1, rng);
  params.stage2 = initDenoiser(config.stage2, rng);
  params.gcn = initGcn(config.gcn, skeleton, rng);
  return params;
}

Matrix stage1Generate(const GenerationRequest& request,
                      const InteractionSpec& spec,
                      const DenoiserParams& params,
                      const GenerationContext& ctx, Rng& rng,
                      std::vector<StepDiagnostic>* diagnostics) {
  require(request.num_frames >= 1, "generate: need at least one frame");
  require(!spec.none(), "stage 1 needs an interactive spec");
  checkStageParams(params, ctx, false, "stage 1");

  PartMask mask = partMask(spec.partSet(), ctx.layout, ctx.skeleton);
  ConditionBundle conds;
  conds.text_embedding = ctx.encoder.encode(request.text);
  conds.mask_bits = mask.asDoubles();
  conds.instruction_embedding = ctx.encoder.encode(spec.instructionText());

  DenoiseFn fn = guidedDenoiser(params, conds, request.guidance_scale,
                                ctx.schedule.steps());
  return reverseSample(fn, ctx.schedule, request.num_frames,
                       ctx.layout.total_dim, rng, request.stochastic, nullptr,
                       diagnostics);
}

Matrix stage2Generate(const GenerationRequest& request,
                      const InteractionSpec& spec, const Matrix& x_inter,
                      const PartMask& mask, const DenoiserParams& params,
                      const GcnParams& gcn, const GenerationContext& ctx,
                      Rng& rng, Vector* spatial_out,
                      std::vector<StepDiagnostic>* diagnostics) {
  require(request.num_frames >= 1, "generate: need at least one frame");
  checkStageParams(params, ctx, true, "stage 2");
  const Index dim = ctx.layout.total_dim;
  require(x_inter.rows() == request.num_frames && x_inter.cols() == dim,
          "stage 2: interactive motion shape mismatch");
  require(mask.dim() == dim, "stage 2: mask width mismatch");
  require(params.config.spatial_dim == gcn.config.spatialDim(),
          "stage 2: graph feature size mismatch");

  // The graph module sees only the consumed dims of the interactive motion.
  Matrix masked_inter = composeOverwrite(
      Matrix(Matrix::Zero(x_inter.rows(), dim)), x_inter, mask.bits);
  GcnCache cache;
  Vector spatial = gcnSpatialCondition(gcn, masked_inter, ctx.layout, cache);
  if (spatial_out) *spatial_out = spatial;

  ConditionBundle conds;
  conds.text_embedding = ctx.encoder.encode(request.text);
  conds.mask_bits = Vector::Ones(dim) - mask.asDoubles();  // reversed mask
  conds.instruction_embedding = ctx.encoder.encode(spec.residual_text);
  conds.spatial_feature = std::move(spatial);

  DenoiseFn fn = guidedDenoiser(params, conds, request.guidance_scale,
                                ctx.schedule.steps());
  PostStepFn post = [&x_inter, &mask](const Matrix& x0_hat, int) {
    return composeOverwrite(x0_hat, x_inter, mask.bits);
  };
  return reverseSample(fn, ctx.schedule, request.num_frames, dim, rng,
                       request.stochastic, post, diagnostics);
}

GenerationTrace generate(const GenerationRequest& request,
                         const ExtractorFn& extractor,
                         const PipelineParams& params,
                         const GenerationContext& ctx) {
  require(static_cast<bool>(extractor), "generate: missing extractor");
  require(request.num_frames >= 1, "generate: need at least one frame");

  GenerationTrace trace;
  trace.spec = extractor(request.text);
  Rng base(request.seed);

  if (trace.spec.none() || !request.two_stage) {
    // Single-stage path: the final network conditioned on the text alone.
    checkStageParams(params.stage2, ctx, true, "stage 2");
    ConditionBundle conds;
    conds.text_embedding = ctx.encoder.encode(request.text);
    conds.drop_mask = conds.drop_instruction = conds.drop_spatial = true;
    DenoiseFn fn = guidedDenoiser(params.stage2, conds,
                                  request.guidance_scale,
                                  ctx.schedule.steps());
    Rng rng = base.derive(3);
    trace.motion.frames =
        reverseSample(fn, ctx.schedule, request.num_frames,
                      ctx.layout.total_dim, rng, request.stochastic, nullptr,
                      &trace.stage2_steps);
  } else {
    trace.mask = partMask(trace.spec.partSet(), ctx.layout, ctx.skeleton);
    Rng rng1 = base.derive(1);
    trace.x_inter = stage1Generate(request, trace.spec, params.stage1, ctx,
                                   rng1, &trace.stage1_steps);
    Rng rng2 = base.derive(2);
    trace.motion.frames = stage2Generate(
        request, trace.spec, trace.x_inter, trace.mask, params.stage2,
        params.gcn, ctx, rng2, &trace.spatial_feature, &trace.stage2_steps);
    require((gatherMasked(trace.motion.frames, trace.mask).array() ==
             gatherMasked(trace.x_inter, trace.mask).array())
                .all(),
            "generate: interactive dims were not carried into the output");
  }
  trace.motion.layout = ctx.layout;
  return trace;
}

namespace {

nlohmann::json stepArray(const std::vector<StepDiagnostic>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const StepDiagnostic& s : steps)
    arr.push_back({{"t", s.t},
                   {"estimate_norm", s.estimate_norm},
                   {"iterate_norm", s.iterate_norm}});
  return arr;
}

}  // namespace

nlohmann::json traceToJson(const GenerationTrace& trace) {
  return {{"spec", specToJson(trace.spec)},
          {"mask_dims", trace.mask.popcount()},
          {"num_frames", trace.motion.numFrames()},
          {"single_stage", trace.x_inter.size() == 0},
          {"stage1_steps", stepArray(trace.stage1_steps)},
          {"stage2_steps", stepArray(trace.stage2_steps)}};
}

namespace {

void checkTrainConfig(const TrainConfig& config,
                      const std::vector<TrainItem>& dataset,
                      const GenerationContext& ctx,
                      const DenoiserParams& params) {
  require(!dataset.empty(), "training needs a non-empty dataset");
  require(config.steps >= 1, "training config: steps must be positive");
  require(config.batch_size >= 1,
          "training config: batch size must be positive");
  require(config.lr >= 0.0 && std::isfinite(config.lr),
          "training config: lr must be finite and non-negative");
  require(config.cond_dropout >= 0.0 && config.cond_dropout <= 1.0,
          "training config: dropout must lie in [0, 1]");
  for (const TrainItem& item : dataset)
    require(item.motion.frames.cols() == ctx.layout.total_dim &&
                item.motion.numFrames() >= 1,
            "training item does not match the pose layout");
  require(params.config.pose_dim == ctx.layout.total_dim,
          "training: params do not match the pose layout");
  require(ctx.encoder.width() == params.config.text_width,
          "training: text encoder width mismatch");
}

}  // namespace

TrainResult trainStage1(DenoiserParams& params,
                        const std::vector<TrainItem>& dataset,
                        const TrainConfig& config,
                        const GenerationContext& ctx) {
  checkTrainConfig(config, dataset, ctx, params);
  require(!params.config.has_spatial,
          "stage-1 training got a spatial-input model");
  const Index dim = ctx.layout.total_dim;

  struct Prepared {
    const Matrix* x0 = nullptr;
    ConditionBundle conds;
    IntVector keep_bits;  // complement: ground truth fills these dims
  };
  std::vector<Prepared> prepared;
  for (const TrainItem& item : dataset) {
    if (item.spec.none()) continue;
    Prepared p;
    p.x0 = &item.motion.frames;
    PartMask mask = partMask(item.spec.partSet(), ctx.layout, ctx.skeleton);
    p.conds.text_embedding = ctx.encoder.encode(item.caption);
    p.conds.mask_bits = mask.asDoubles();
    p.conds.instruction_embedding =
        ctx.encoder.encode(item.spec.instructionText());
    p.keep_bits = IntVector::Ones(dim) - mask.bits;
    prepared.push_back(std::move(p));
  }
  require(!prepared.empty(), "stage-1 training needs interactive items");

  Rng rng(config.seed);
  std::vector<TensorRef> param_refs = tensorRefs(params);
  AdamState state = AdamState::forTensors(param_refs);
  const Index t_steps = ctx.schedule.steps();

  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    std::vector<Stage2Item> batch;
    batch.reserve(config.batch_size);
    for (Index b = 0; b < config.batch_size; ++b) {
      const Prepared& p =
          prepared[rng.uniformInt(0, static_cast<int>(prepared.size()) - 1)];
      Stage2Item item;
      item.base.t = rng.uniformInt(1, static_cast<int>(t_steps));
      item.base.conds = p.conds;
      if (rng.uniform() < config.cond_dropout)
        item.base.conds = item.base.conds.dropped();
      item.base.x0 = *p.x0;
      item.base.x_t = forwardSample(item.base.x0, item.base.t, ctx.schedule,
                                    rng);
      item.x_inter = *p.x0;
      item.mask_bits = p.keep_bits;
      batch.push_back(std::move(item));
    }
    DenoiserLoss loss = stage2Loss(params, batch, t_steps);
    result.loss_curve.push_back(loss.loss);
    adamStep(state, param_refs, tensorRefs(loss.grads), config.lr);
  }
  return result;
}

Stage2JointLoss stage2JointLoss(const DenoiserParams& params,
                                const GcnParams& gcn,
                                const std::vector<Stage2Item>& batch,
                                const std::vector<Matrix>& gcn_inputs,
                                Index t_steps, const PoseLayout& layout) {
  require(!batch.empty(), "stage2JointLoss: empty batch");
  require(batch.size() == gcn_inputs.size(),
          "stage2JointLoss: one graph input per item");

  std::vector<Stage2Item> items = batch;
  std::vector<GcnCache> caches(items.size());
  std::vector<char> has_graph(items.size(), 0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (gcn_inputs[i].size() == 0 || items[i].base.conds.drop_spatial)
      continue;
    items[i].base.conds.spatial_feature =
        gcnSpatialCondition(gcn, gcn_inputs[i], layout, caches[i]);
    has_graph[i] = 1;
  }

  DenoiserLoss inner = stage2Loss(params, items, t_steps);
  Stage2JointLoss out;
  out.loss = inner.loss;
  out.denoiser_grads = std::move(inner.grads);
  out.gcn_grads = gcnZerosLike(gcn);
  for (std::size_t i = 0; i < items.size(); ++i)
    if (has_graph[i])
      gcnBackward(gcn, caches[i], inner.cond_grads[i].spatial, out.gcn_grads);
  out.cond_grads = std::move(inner.cond_grads);
  return out;
}

TrainResult trainStage2(DenoiserParams& params, GcnParams& gcn,
                        const std::vector<TrainItem>& dataset,
                        const TrainConfig& config,
                        const GenerationContext& ctx) {
  checkTrainConfig(config, dataset, ctx, params);
  require(params.config.has_spatial,
          "stage-2 training needs a spatial-input model");
  require(params.config.spatial_dim == gcn.config.spatialDim(),
          "stage-2 training: graph feature size mismatch");
  const Index dim = ctx.layout.total_dim;

  struct Prepared {
    const Matrix* x0 = nullptr;
    ConditionBundle conds;  // spatial feature attached per step
    IntVector mask_bits;
    Matrix gcn_input;  // empty for non-interactive items
  };
  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  for (const TrainItem& item : dataset) {
    Prepared p;
    p.x0 = &item.motion.frames;
    p.conds.text_embedding = ctx.encoder.encode(item.caption);
    if (item.spec.none()) {
      // Text-only path: these items never touch the graph module.
      p.mask_bits = IntVector::Zero(dim);
      p.conds.drop_mask = p.conds.drop_instruction = p.conds.drop_spatial =
          true;
    } else {
      PartMask mask = partMask(item.spec.partSet(), ctx.layout, ctx.skeleton);
      p.mask_bits = mask.bits;
      p.conds.mask_bits = Vector::Ones(dim) - mask.asDoubles();
      p.conds.instruction_embedding =
          ctx.encoder.encode(item.spec.residual_text);
      // Teacher forcing: ground truth masked to the interactive dims.
      p.gcn_input = composeOverwrite(
          Matrix(Matrix::Zero(item.motion.frames.rows(), dim)),
          item.motion.frames, mask.bits);
    }
    prepared.push_back(std::move(p));
  }

  Rng rng(config.seed);
  std::vector<TensorRef> all_refs = tensorRefs(params);
  {
    std::vector<TensorRef> graph_refs = gcnTensorRefs(gcn);
    all_refs.insert(all_refs.end(), graph_refs.begin(), graph_refs.end());
  }
  AdamState state = AdamState::forTensors(all_refs);
  const Index t_steps = ctx.schedule.steps();

  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    std::vector<Stage2Item> batch;
    std::vector<Matrix> gcn_inputs;
    batch.reserve(config.batch_size);
    gcn_inputs.reserve(config.batch_size);
    for (Index b = 0; b < config.batch_size; ++b) {
      const Prepared& p =
          prepared[rng.uniformInt(0, static_cast<int>(prepared.size()) - 1)];
      Stage2Item item;
      item.base.t = rng.uniformInt(1, static_cast<int>(t_steps));
      item.base.conds = p.conds;
      bool drop_all = rng.uniform() < config.cond_dropout;
      if (drop_all) item.base.conds = item.base.conds.dropped();
      item.base.x0 = *p.x0;
      item.base.x_t = forwardSample(item.base.x0, item.base.t, ctx.schedule,
                                    rng);
      item.x_inter = *p.x0;
      item.mask_bits = p.mask_bits;
      batch.push_back(std::move(item));
      gcn_inputs.push_back(drop_all ? Matrix() : p.gcn_input);
    }
    Stage2JointLoss joint = stage2JointLoss(params, gcn, batch, gcn_inputs,
                                            t_steps, ctx.layout);
    result.loss_curve.push_back(joint.loss);

    std::vector<TensorRef> grad_refs = tensorRefs(joint.denoiser_grads);
    {
      std::vector<TensorRef> graph_refs = gcnTensorRefs(joint.gcn_grads);
      grad_refs.insert(grad_refs.end(), graph_refs.begin(), graph_refs.end());
    }
    adamStep(state, all_refs, grad_refs, config.lr);
  }
  return result;
}

namespace {

constexpr const char* kPipelineKind = "pipeline";

nlohmann::json gcnConfigToJson(const GcnConfig& config) {
  return {{"num_joints", config.num_joints},
          {"hidden_width", config.hidden_width},
          {"num_layers", config.num_layers},
          {"conv_kernel", config.conv_kernel},
          {"conv_stride", config.conv_stride}};
}

long long intField(const nlohmann::json& doc, const char* field,
                   const char* what) {
  if (!doc.contains(field) || !doc[field].is_number_integer())
    throw DataError(std::string(what) + ": missing integer field '" + field +
                    "'");
  return doc[field].get<long long>();
}

double numberField(const nlohmann::json& doc, const char* field,
                   const char* what) {
  if (!doc.contains(field) || !doc[field].is_number())
    throw DataError(std::string(what) + ": missing numeric field '" + field +
                    "'");
  return doc[field].get<double>();
}

GcnConfig gcnConfigFromJson(const nlohmann::json& doc) {
  const char* what = "checkpoint graph config";
  GcnConfig config;
  config.num_joints = intField(doc, "num_joints", what);
  config.hidden_width = intField(doc, "hidden_width", what);
  config.num_layers = static_cast<int>(intField(doc, "num_layers", what));
  config.conv_kernel = intField(doc, "conv_kernel", what);
  config.conv_stride = intField(doc, "conv_stride", what);
  return config;
}

ScheduleSpec scheduleFromJson(const nlohmann::json& doc) {
  const char* what = "checkpoint schedule";
  ScheduleSpec spec;
  spec.t_steps = intField(doc, "t_steps", what);
  spec.beta_start = numberField(doc, "beta_start", what);
  spec.beta_end = numberField(doc, "beta_end", what);
  if (spec.t_steps < 1 || !(spec.beta_start > 0.0) ||
      !(spec.beta_start <= spec.beta_end) || !(spec.beta_end < 1.0))
    throw DataError(std::string(what) + ": invalid parameters");
  return spec;
}

std::vector<TensorRef> prefixedRefs(const std::string& prefix,
                                    std::vector<TensorRef> refs) {
  for (TensorRef& ref : refs) ref.name = prefix + ref.name;
  return refs;
}

std::vector<TensorRef> pipelineRefs(PipelineParams& params) {
  std::vector<TensorRef> refs =
      prefixedRefs("stage1.", tensorRefs(params.stage1));
  for (const TensorRef& ref :
       prefixedRefs("stage2.", tensorRefs(params.stage2)))
    refs.push_back(ref);
  for (const TensorRef& ref : prefixedRefs("gcn.", gcnTensorRefs(params.gcn)))
    refs.push_back(ref);
  return refs;
}

}  // namespace

void writePipelineCheckpoint(const std::string& path, PipelineParams& params,
                             const ScheduleSpec& schedule) {
  nlohmann::json config{
      {"kind", kPipelineKind},
      {"schedule",
       {{"t_steps", schedule.t_steps},
        {"beta_start", schedule.beta_start},
        {"beta_end", schedule.beta_end}}},
      {"stage1", denoiserConfigToJson(params.stage1.config)},
      {"stage2", denoiserConfigToJson(params.stage2.config)},
      {"gcn", gcnConfigToJson(params.gcn.config)},
  };
  writeCheckpoint(path, config, pipelineRefs(params));
}

PipelineCheckpoint readPipelineCheckpoint(const std::string& path,
                                          const Skeleton& skeleton) {
  RawCheckpoint raw = readCheckpoint(path);
  const char* what = "checkpoint config";
  for (const char* field : {"kind", "schedule", "stage1", "stage2", "gcn"})
    if (!raw.config.contains(field))
      throw DataError(std::string(what) + ": missing field '" + field + "'");
  if (raw.config["kind"] != kPipelineKind)
    throw DataError(std::string(what) + ": not a pipeline checkpoint");

  PipelineConfig config;
  config.stage1 = denoiserConfigFromJson(raw.config["stage1"]);
  config.stage2 = denoiserConfigFromJson(raw.config["stage2"]);
  config.gcn = gcnConfigFromJson(raw.config["gcn"]);
  PipelineCheckpoint out;
  out.schedule = scheduleFromJson(raw.config["schedule"]);

  Rng scratch(0);
  try {
    out.params = initPipeline(config, skeleton, scratch);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
  tensorsFromJson(raw.tensors, pipelineRefs(out.params));
  return out;
}

}  // namespace textim
