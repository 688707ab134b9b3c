#include <textim/denoiser.hpp>

#include <textim/diffusion.hpp>

#include <cmath>

namespace textim {

void DenoiserConfig::validate() const {
  require(pose_dim >= 1, "denoiser config: pose_dim must be positive");
  require(width >= 1, "denoiser config: width must be positive");
  require(depth >= 0, "denoiser config: depth must be non-negative");
  require(cond_width >= 1, "denoiser config: cond_width must be positive");
  require(text_width >= 1, "denoiser config: text_width must be positive");
  require(time_width >= 2 && time_width % 2 == 0,
          "denoiser config: time_width must be even and >= 2");
  if (has_spatial)
    require(spatial_dim >= 1, "denoiser config: spatial_dim must be positive");
  else
    require(spatial_dim == 0,
            "denoiser config: spatial_dim requires has_spatial");
}

nlohmann::json denoiserConfigToJson(const DenoiserConfig& config) {
  return nlohmann::json{
      {"pose_dim", config.pose_dim},       {"width", config.width},
      {"depth", config.depth},             {"cond_width", config.cond_width},
      {"text_width", config.text_width},   {"time_width", config.time_width},
      {"has_spatial", config.has_spatial}, {"spatial_dim", config.spatial_dim},
  };
}

DenoiserConfig denoiserConfigFromJson(const nlohmann::json& doc) {
  DenoiserConfig config;
  try {
    config.pose_dim = doc.at("pose_dim").get<Index>();
    config.width = doc.at("width").get<Index>();
    config.depth = doc.at("depth").get<int>();
    config.cond_width = doc.at("cond_width").get<Index>();
    config.text_width = doc.at("text_width").get<Index>();
    config.time_width = doc.at("time_width").get<Index>();
    config.has_spatial = doc.at("has_spatial").get<bool>();
    config.spatial_dim = doc.at("spatial_dim").get<Index>();
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("denoiser config: ") + err.what());
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& err) {
    throw DataError(err.what());
  }
  return config;
}

Vector affineApply(const Linear& layer, const Vector& x) {
  require(layer.W.cols() == x.size(), "affineApply: input width mismatch");
  require(layer.W.rows() == layer.b.size(), "affineApply: bias mismatch");
  return layer.W * x + layer.b;
}

namespace {

Linear initLinear(Index rows, Index cols, Rng& rng) {
  Linear layer;
  layer.W.resize(rows, cols);
  double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      layer.W(i, j) = (2.0 * rng.uniform() - 1.0) * scale;
  layer.b = Vector::Zero(rows);
  return layer;
}

Linear zerosLinear(const Linear& like) {
  return Linear{Matrix::Zero(like.W.rows(), like.W.cols()),
                Vector::Zero(like.b.size())};
}

void refLinear(std::vector<TensorRef>& refs, const std::string& name,
               Linear& layer) {
  refs.push_back({name + ".W", layer.W.data(), layer.W.rows(), layer.W.cols()});
  refs.push_back({name + ".b", layer.b.data(), layer.b.size(), 1});
}

// Raw condition input after the dropout rule: dropped or absent inputs are
// zeros; present inputs must have the declared width.
Vector conditionInput(const Vector& value, bool dropped, Index width,
                      const char* what) {
  if (dropped || value.size() == 0) return Vector::Zero(width);
  require(value.size() == width,
          std::string("predictX0: ") + what + " has wrong width");
  return value;
}

}  // namespace

DenoiserParams initDenoiser(const DenoiserConfig& config, Rng& rng) {
  config.validate();
  DenoiserParams params;
  params.config = config;
  params.input = initLinear(config.width, config.inputDim(), rng);
  for (int k = 0; k < config.depth; ++k)
    params.blocks.push_back(initLinear(config.width, config.width, rng));
  params.output = initLinear(config.pose_dim, config.width, rng);
  params.time_proj = initLinear(config.time_width, config.time_width, rng);
  params.mask_proj = initLinear(config.cond_width, config.pose_dim, rng);
  params.text_proj = initLinear(config.cond_width, config.text_width, rng);
  if (config.has_spatial)
    params.spatial_proj = initLinear(config.cond_width, config.spatial_dim, rng);
  return params;
}

DenoiserParams zerosLike(const DenoiserParams& params) {
  DenoiserParams out;
  out.config = params.config;
  out.input = zerosLinear(params.input);
  for (const Linear& block : params.blocks)
    out.blocks.push_back(zerosLinear(block));
  out.output = zerosLinear(params.output);
  out.time_proj = zerosLinear(params.time_proj);
  out.mask_proj = zerosLinear(params.mask_proj);
  out.text_proj = zerosLinear(params.text_proj);
  if (params.config.has_spatial)
    out.spatial_proj = zerosLinear(params.spatial_proj);
  return out;
}

std::vector<TensorRef> tensorRefs(DenoiserParams& params) {
  std::vector<TensorRef> refs;
  refLinear(refs, "input", params.input);
  for (size_t k = 0; k < params.blocks.size(); ++k)
    refLinear(refs, "block" + std::to_string(k), params.blocks[k]);
  refLinear(refs, "output", params.output);
  refLinear(refs, "time", params.time_proj);
  refLinear(refs, "mask", params.mask_proj);
  refLinear(refs, "text", params.text_proj);
  if (params.config.has_spatial)
    refLinear(refs, "spatial", params.spatial_proj);
  return refs;
}

Index parameterCount(const DenoiserParams& params) {
  Index count = 0;
  for (const TensorRef& ref : tensorRefs(const_cast<DenoiserParams&>(params)))
    count += ref.size();
  return count;
}

ConditionBundle ConditionBundle::dropped() const {
  ConditionBundle out = *this;
  out.drop_text = out.drop_mask = out.drop_instruction = out.drop_spatial =
      true;
  return out;
}

Vector timeEmbed(int t, Index t_steps, Index width) {
  require(t_steps >= 1, "timeEmbed: t_steps must be positive");
  require(t >= 1 && t <= t_steps, "timeEmbed: step out of [1, T]");
  require(width >= 2 && width % 2 == 0, "timeEmbed: width must be even >= 2");
  Vector v(width);
  for (Index i = 0; i < width / 2; ++i) {
    double freq = std::pow(
        10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
    v[2 * i] = std::sin(t * freq);
    v[2 * i + 1] = std::cos(t * freq);
  }
  return v;
}

Vector maskProject(const Linear& proj, const Vector& bits) {
  return affineApply(proj, bits);
}

Matrix predictX0WithCache(const DenoiserParams& params, const Matrix& x_t,
                          int t, Index t_steps, const ConditionBundle& conds,
                          ForwardCache& cache) {
  const DenoiserConfig& config = params.config;
  config.validate();
  require(x_t.cols() == config.pose_dim, "predictX0: pose width mismatch");
  require(x_t.rows() >= 1, "predictX0: need at least one frame");
  for (const TensorRef& ref :
       tensorRefs(const_cast<DenoiserParams&>(params))) {
    Eigen::Map<const Vector> flat(ref.data, ref.size());
    require(flat.allFinite(), "predictX0: non-finite parameter " + ref.name);
  }

  cache.time_raw = timeEmbed(t, t_steps, config.time_width);
  cache.time_vec = affineApply(params.time_proj, cache.time_raw);

  cache.mask_in = conditionInput(conds.mask_bits, conds.drop_mask,
                                 config.pose_dim, "mask bits");
  cache.mask_vec = affineApply(params.mask_proj, cache.mask_in);

  cache.text_in = conditionInput(conds.text_embedding, conds.drop_text,
                                 config.text_width, "text embedding");
  cache.text_vec = affineApply(params.text_proj, cache.text_in);

  cache.instr_in =
      conditionInput(conds.instruction_embedding, conds.drop_instruction,
                     config.text_width, "instruction embedding");
  cache.instr_vec = affineApply(params.text_proj, cache.instr_in);

  if (config.has_spatial) {
    cache.spatial_in = conditionInput(conds.spatial_feature, conds.drop_spatial,
                                      config.spatial_dim, "spatial feature");
    cache.spatial_vec = affineApply(params.spatial_proj, cache.spatial_in);
  } else {
    cache.spatial_in.resize(0);
    cache.spatial_vec.resize(0);
  }

  const Index T = x_t.rows();
  cache.U.resize(config.inputDim(), T);
  for (Index f = 0; f < T; ++f) {
    Index at = 0;
    cache.U.col(f).segment(at, config.pose_dim) = x_t.row(f).transpose();
    at += config.pose_dim;
    cache.U.col(f).segment(at, config.time_width) = cache.time_vec;
    at += config.time_width;
    cache.U.col(f).segment(at, config.cond_width) = cache.mask_vec;
    at += config.cond_width;
    cache.U.col(f).segment(at, config.cond_width) = cache.text_vec;
    at += config.cond_width;
    cache.U.col(f).segment(at, config.cond_width) = cache.instr_vec;
    at += config.cond_width;
    if (config.has_spatial) {
      cache.U.col(f).segment(at, config.cond_width) = cache.spatial_vec;
      at += config.cond_width;
    }
  }

  cache.H.assign(1, Matrix());
  cache.H[0] = (params.input.W * cache.U).colwise() + params.input.b;
  cache.Z.clear();
  for (int k = 0; k < config.depth; ++k) {
    Matrix z = (params.blocks[k].W * cache.H[k]).colwise() + params.blocks[k].b;
    cache.H.push_back(cache.H[k] + z.cwiseMax(0.0));
    cache.Z.push_back(std::move(z));
  }

  Matrix out =
      (params.output.W * cache.H[config.depth]).colwise() + params.output.b;
  return out.transpose();
}

Matrix predictX0(const DenoiserParams& params, const Matrix& x_t, int t,
                 Index t_steps, const ConditionBundle& conds) {
  ForwardCache cache;
  return predictX0WithCache(params, x_t, t, t_steps, conds, cache);
}

CondGrads backpropDenoiser(const DenoiserParams& params,
                           const ConditionBundle& conds,
                           const ForwardCache& cache, const Matrix& d_out,
                           DenoiserParams& grads) {
  const DenoiserConfig& config = params.config;
  const Index T = cache.U.cols();
  require(d_out.rows() == T && d_out.cols() == config.pose_dim,
          "backpropDenoiser: gradient shape mismatch");

  Matrix g_out = d_out.transpose();  // pose_dim x T
  grads.output.W += g_out * cache.H[config.depth].transpose();
  grads.output.b += g_out.rowwise().sum();

  Matrix g_h = params.output.W.transpose() * g_out;  // width x T
  for (int k = config.depth - 1; k >= 0; --k) {
    Matrix g_z =
        (cache.Z[k].array() > 0.0).select(g_h, Matrix::Zero(g_h.rows(), T));
    grads.blocks[k].W += g_z * cache.H[k].transpose();
    grads.blocks[k].b += g_z.rowwise().sum();
    g_h += params.blocks[k].W.transpose() * g_z;
  }

  grads.input.W += g_h * cache.U.transpose();
  grads.input.b += g_h.rowwise().sum();
  Matrix g_u = params.input.W.transpose() * g_h;  // inputDim x T

  Index at = config.pose_dim;  // gradient w.r.t. x_t is not consumed
  Vector d_time_vec = g_u.middleRows(at, config.time_width).rowwise().sum();
  at += config.time_width;
  Vector d_mask_vec = g_u.middleRows(at, config.cond_width).rowwise().sum();
  at += config.cond_width;
  Vector d_text_vec = g_u.middleRows(at, config.cond_width).rowwise().sum();
  at += config.cond_width;
  Vector d_instr_vec = g_u.middleRows(at, config.cond_width).rowwise().sum();
  at += config.cond_width;
  Vector d_spatial_vec;
  if (config.has_spatial) {
    d_spatial_vec = g_u.middleRows(at, config.cond_width).rowwise().sum();
    at += config.cond_width;
  }

  grads.time_proj.W += d_time_vec * cache.time_raw.transpose();
  grads.time_proj.b += d_time_vec;

  grads.mask_proj.W += d_mask_vec * cache.mask_in.transpose();
  grads.mask_proj.b += d_mask_vec;

  grads.text_proj.W += d_text_vec * cache.text_in.transpose() +
                       d_instr_vec * cache.instr_in.transpose();
  grads.text_proj.b += d_text_vec + d_instr_vec;

  CondGrads cond;
  cond.mask = conds.drop_mask ? Vector::Zero(config.pose_dim)
                              : Vector(params.mask_proj.W.transpose() *
                                       d_mask_vec);
  cond.text = conds.drop_text ? Vector::Zero(config.text_width)
                              : Vector(params.text_proj.W.transpose() *
                                       d_text_vec);
  cond.instruction = conds.drop_instruction
                         ? Vector::Zero(config.text_width)
                         : Vector(params.text_proj.W.transpose() *
                                  d_instr_vec);
  if (config.has_spatial) {
    grads.spatial_proj.W += d_spatial_vec * cache.spatial_in.transpose();
    grads.spatial_proj.b += d_spatial_vec;
    cond.spatial = conds.drop_spatial
                       ? Vector::Zero(config.spatial_dim)
                       : Vector(params.spatial_proj.W.transpose() *
                                d_spatial_vec);
  } else {
    cond.spatial = Vector();
  }
  return cond;
}

DenoiserLoss stage1Loss(const DenoiserParams& params,
                        const std::vector<DiffusionItem>& batch,
                        Index t_steps) {
  require(!batch.empty(), "stage1Loss: empty batch");
  DenoiserLoss result;
  result.grads = zerosLike(params);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const DiffusionItem& item : batch) {
    require(item.x0.rows() == item.x_t.rows() &&
                item.x0.cols() == item.x_t.cols(),
            "stage1Loss: x0/x_t shape mismatch");
    ForwardCache cache;
    Matrix x0_hat =
        predictX0WithCache(params, item.x_t, item.t, t_steps, item.conds, cache);
    Matrix err = x0_hat - item.x0;
    const double denom =
        static_cast<double>(err.rows()) * static_cast<double>(err.cols());
    result.loss += err.squaredNorm() / denom * inv_batch;
    Matrix d_out = err * (2.0 / denom * inv_batch);
    result.cond_grads.push_back(
        backpropDenoiser(params, item.conds, cache, d_out, result.grads));
  }
  return result;
}

DenoiserLoss stage2Loss(const DenoiserParams& params,
                        const std::vector<Stage2Item>& batch, Index t_steps) {
  require(!batch.empty(), "stage2Loss: empty batch");
  DenoiserLoss result;
  result.grads = zerosLike(params);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const Stage2Item& item : batch) {
    const DiffusionItem& base = item.base;
    require(base.x0.rows() == base.x_t.rows() &&
                base.x0.cols() == base.x_t.cols(),
            "stage2Loss: x0/x_t shape mismatch");
    require(item.x_inter.rows() == base.x0.rows() &&
                item.x_inter.cols() == base.x0.cols(),
            "stage2Loss: x_inter shape mismatch");
    require(item.mask_bits.size() == base.x0.cols(),
            "stage2Loss: mask width mismatch");

    ForwardCache cache;
    Matrix x0_hat =
        predictX0WithCache(params, base.x_t, base.t, t_steps, base.conds, cache);
    Matrix composed = composeOverwrite(x0_hat, item.x_inter, item.mask_bits);
    Matrix err = composed - base.x0;
    const double denom =
        static_cast<double>(err.rows()) * static_cast<double>(err.cols());
    result.loss += err.squaredNorm() / denom * inv_batch;

    // The prediction only reaches the loss through non-mask dims; mask-dim
    // gradients are identically zero, not merely small.
    Matrix d_out = err * (2.0 / denom * inv_batch);
    for (Index d = 0; d < item.mask_bits.size(); ++d)
      if (item.mask_bits[d]) d_out.col(d).setZero();
    result.cond_grads.push_back(
        backpropDenoiser(params, base.conds, cache, d_out, result.grads));
  }
  return result;
}

namespace {

// Steps must be all-or-nothing: validate every gradient before any write.
const TensorRef* findNonFinite(const std::vector<TensorRef>& grads) {
  for (const TensorRef& ref : grads) {
    Eigen::Map<const Vector> flat(ref.data, ref.size());
    if (!flat.allFinite()) return &ref;
  }
  return nullptr;
}

void checkAligned(const std::vector<TensorRef>& params,
                  const std::vector<TensorRef>& grads) {
  require(params.size() == grads.size(), "optimizer: tensor count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    require(params[i].name == grads[i].name,
            "optimizer: tensor name mismatch at " + params[i].name);
    require(params[i].rows == grads[i].rows && params[i].cols == grads[i].cols,
            "optimizer: tensor shape mismatch at " + params[i].name);
  }
}

}  // namespace

StepOutcome sgdStep(const std::vector<TensorRef>& params,
                    const std::vector<TensorRef>& grads, double lr) {
  checkAligned(params, grads);
  require(std::isfinite(lr), "sgdStep: non-finite learning rate");
  if (const TensorRef* bad = findNonFinite(grads))
    return {false, "non-finite gradient in " + bad->name};
  for (size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Vector> p(params[i].data, params[i].size());
    Eigen::Map<const Vector> g(grads[i].data, grads[i].size());
    p -= lr * g;
  }
  return {true, ""};
}

AdamState AdamState::forTensors(const std::vector<TensorRef>& params) {
  AdamState state;
  for (const TensorRef& ref : params) {
    state.m.push_back(Vector::Zero(ref.size()));
    state.v.push_back(Vector::Zero(ref.size()));
  }
  return state;
}

StepOutcome adamStep(AdamState& state, const std::vector<TensorRef>& params,
                     const std::vector<TensorRef>& grads, double lr,
                     double beta1, double beta2, double eps) {
  checkAligned(params, grads);
  require(std::isfinite(lr), "adamStep: non-finite learning rate");
  require(state.m.size() == params.size(),
          "adamStep: state does not match parameter list");
  if (const TensorRef* bad = findNonFinite(grads))
    return {false, "non-finite gradient in " + bad->name};

  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    require(state.m[i].size() == params[i].size(),
            "adamStep: state shape mismatch at " + params[i].name);
    Eigen::Map<Vector> p(params[i].data, params[i].size());
    Eigen::Map<const Vector> g(grads[i].data, grads[i].size());
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Vector m_hat = state.m[i] / c1;
    Vector v_hat = state.v[i] / c2;
    p -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
  }
  return {true, ""};
}

}  // namespace textim
