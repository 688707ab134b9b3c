// Acceptance gate: eleven hard criteria, one [PASS] line each. Any failure
// prints [FAIL] file:line with the offending values and exits nonzero.
#include <textim/data_synth.hpp>
#include <textim/diffusion.hpp>
#include <textim/io.hpp>
#include <textim/llm_client.hpp>
#include <textim/metrics.hpp>
#include <textim/part_gcn.hpp>
#include <textim/pipeline.hpp>
#include <textim/semantics.hpp>
#include <textim/text_encoder.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace textim;

// Always-on requirement: never compiled out in Release.
#define REQUIRE(cond, msg)                                                   \
  do {                                                                       \
    if (!(cond)) {                                                           \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg   \
                << "\n";                                                     \
      std::exit(1);                                                          \
    }                                                                        \
  } while (0)

struct Stopwatch {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void pass(int num, const std::string& note) {
  std::cout << "[PASS] criterion " << num << ": " << note << std::endl;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance(const std::vector<double>& xs, double m) {
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

// --------------------------------------------------------------------------
// 1. Closed-form forward sampling agrees with the iterated one-step noising
//    chain in mean and variance over 10^4 draws, within three standard
//    errors, in under ten seconds.

void criterion1() {
  Stopwatch timer;
  const DiffusionSchedule schedule = makeSchedule(50, 0.005, 0.2);
  const double x0 = 1.3;
  const int kDraws = 10000;
  Matrix x0_mat(1, 1);
  x0_mat(0, 0) = x0;
  Rng rng(424242);

  for (int t : {1, 7, 25, 50}) {
    std::vector<double> closed(kDraws), iterated(kDraws);
    for (int i = 0; i < kDraws; ++i)
      closed[i] = forwardSample(x0_mat, t, schedule, rng)(0, 0);
    for (int i = 0; i < kDraws; ++i) {
      double x = x0;
      for (int s = 1; s <= t; ++s) {
        const double beta = schedule.beta(s);
        x = std::sqrt(1.0 - beta) * x + std::sqrt(beta) * rng.normal();
      }
      iterated[i] = x;
    }

    const double mc = mean(closed), mi = mean(iterated);
    const double vc = variance(closed, mc), vi = variance(iterated, mi);
    const double ab = schedule.alphaBar(t);
    const double analytic_mean = std::sqrt(ab) * x0;
    const double analytic_var = 1.0 - ab;

    const double se_mean = std::sqrt(vc / kDraws + vi / kDraws);
    REQUIRE(std::abs(mc - mi) <= 3.0 * se_mean,
            "t=" << t << ": closed mean " << mc << " vs iterated " << mi
                 << " differ by more than 3 standard errors");
    const double se_var = analytic_var * std::sqrt(2.0 / (kDraws - 1));
    REQUIRE(std::abs(vc - vi) <= 3.0 * std::sqrt(2.0) * se_var,
            "t=" << t << ": closed variance " << vc << " vs iterated " << vi);
    REQUIRE(std::abs(mc - analytic_mean) <= 3.0 * std::sqrt(vc / kDraws),
            "t=" << t << ": closed mean " << mc << " off the analytic "
                 << analytic_mean);
    REQUIRE(std::abs(vc - analytic_var) <= 3.0 * se_var,
            "t=" << t << ": closed variance " << vc << " off the analytic "
                 << analytic_var);
  }
  const double elapsed = timer.seconds();
  REQUIRE(elapsed < 10.0, "moment check took " << elapsed << "s");
  pass(1, "forward-sample moments match the iterated chain (4 timesteps x 1e4 draws)");
}

// --------------------------------------------------------------------------
// 2. The standard-form posterior mean matches an independently derived
//    scalar Gaussian product oracle to 1e-6 on 100 random cases; the
//    printed-form variant's deviation is reported, never asserted.

void criterion2() {
  Rng rng(777);
  double max_printed_dev = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index t_steps = 2 + rng.uniformInt(0, 78);
    const double beta_start = 1e-4 + 0.019 * rng.uniform();
    const double beta_end = 0.05 + 0.3 * rng.uniform();
    const DiffusionSchedule schedule =
        makeSchedule(t_steps, beta_start, beta_end);
    const int t = 2 + rng.uniformInt(0, static_cast<int>(t_steps) - 2);

    const double x0 = 2.0 * rng.normal();
    const double xt = 2.0 * rng.normal();
    Matrix x0m(1, 1), xtm(1, 1);
    x0m(0, 0) = x0;
    xtm(0, 0) = xt;

    // Bayes product of N(x_t; sqrt(a_t) x, b_t) and N(x; sqrt(ab_{t-1}) x0,
    // 1 - ab_{t-1}), combined by precision-weighted means.
    const double alpha_t = schedule.alpha(t);
    const double beta_t = schedule.beta(t);
    const double ab_prev = schedule.alphaBar(t - 1);
    const double prec = alpha_t / beta_t + 1.0 / (1.0 - ab_prev);
    const double oracle = (std::sqrt(alpha_t) * xt / beta_t +
                           std::sqrt(ab_prev) * x0 / (1.0 - ab_prev)) /
                          prec;

    const double standard = posteriorMean(xtm, x0m, t, schedule)(0, 0);
    REQUIRE(std::abs(standard - oracle) <= 1e-6,
            "case " << c << ": standard posterior mean " << standard
                    << " vs oracle " << oracle);

    const double printed =
        posteriorMean(xtm, x0m, t, schedule, PosteriorForm::kAsPrinted)(0, 0);
    max_printed_dev = std::max(max_printed_dev, std::abs(printed - oracle));
  }
  std::cout << "  as-printed posterior form: max |deviation| from the "
               "Gaussian oracle = "
            << max_printed_dev << " (reported, not asserted)\n";
  pass(2, "standard posterior mean matches the scalar Gaussian oracle to 1e-6 (100 cases)");
}

// --------------------------------------------------------------------------
// 3. Central finite differences confirm every learnable tensor's gradient —
//    denoiser trunk, all condition projections, and the graph module — on a
//    configuration of at most 500 parameters.

Skeleton tinySkeleton() {
  Skeleton s;
  s.joint_names = {"root", "arm", "leg"};
  s.parents = {-1, 0, 0};
  s.parts = {BodyPart::Pelvis, BodyPart::LeftArm, BodyPart::RightLeg};
  return s;
}

void criterion3() {
  const Skeleton skeleton = tinySkeleton();
  const PoseLayout layout = buildLayout(3, {});

  GcnConfig gcfg;
  gcfg.num_joints = 3;
  gcfg.hidden_width = 2;
  gcfg.num_layers = 1;
  gcfg.conv_kernel = 2;
  gcfg.conv_stride = 1;

  DenoiserConfig dcfg;
  dcfg.pose_dim = layout.total_dim;
  dcfg.width = 3;
  dcfg.depth = 1;
  dcfg.cond_width = 2;
  dcfg.text_width = 2;
  dcfg.time_width = 2;
  dcfg.has_spatial = true;
  dcfg.spatial_dim = gcfg.spatialDim();

  Rng rng(31337);
  DenoiserParams params = initDenoiser(dcfg, rng);
  GcnParams gcn = initGcn(gcfg, skeleton, rng);
  // The similarity diagonal is piecewise constant (1 for nonzero pooled
  // rows, 0 for zero rows), so the loss is non-smooth exactly where a
  // pooled row vanishes; a nonzero conv bias keeps every finite-difference
  // evaluation on the smooth branch.
  gcn.conv_bias = 0.05 * rng.normalVector(gcfg.hidden_width) +
                  Vector::Constant(gcfg.hidden_width, 0.1);

  const Index param_count = parameterCount(params) + gcnParameterCount(gcn);
  REQUIRE(param_count <= 500,
          "gradient-suite configuration has " << param_count << " params");

  const Index frames = 3;
  const Index t_steps = 6;
  std::vector<PartMask> masks = {
      partMask({BodyPart::LeftArm}, layout, skeleton),
      partMask({BodyPart::RightLeg}, layout, skeleton)};
  std::vector<Stage2Item> batch(2);
  std::vector<Matrix> gcn_inputs;
  for (int i = 0; i < 2; ++i) {
    Stage2Item& item = batch[i];
    item.base.x0 = rng.normalMatrix(frames, layout.total_dim);
    item.base.x_t = rng.normalMatrix(frames, layout.total_dim);
    item.base.t = 2 + i;
    item.base.conds.text_embedding = rng.normalVector(dcfg.text_width);
    item.base.conds.mask_bits = masks[i].asDoubles();
    item.base.conds.instruction_embedding = rng.normalVector(dcfg.text_width);
    item.x_inter = rng.normalMatrix(frames, layout.total_dim);
    item.mask_bits = masks[i].bits;
    gcn_inputs.push_back(rng.normalMatrix(frames, layout.total_dim));
  }

  auto lossAt = [&]() {
    return stage2JointLoss(params, gcn, batch, gcn_inputs, t_steps, layout)
        .loss;
  };
  Stage2JointLoss result =
      stage2JointLoss(params, gcn, batch, gcn_inputs, t_steps, layout);

  std::vector<TensorRef> prefs = tensorRefs(params);
  {
    std::vector<TensorRef> g = gcnTensorRefs(gcn);
    prefs.insert(prefs.end(), g.begin(), g.end());
  }
  std::vector<TensorRef> arefs = tensorRefs(result.denoiser_grads);
  {
    std::vector<TensorRef> g = gcnTensorRefs(result.gcn_grads);
    arefs.insert(arefs.end(), g.begin(), g.end());
  }
  REQUIRE(prefs.size() == arefs.size(), "parameter/gradient tensor mismatch");

  const double eps = 1e-6;
  Index checked = 0;
  for (std::size_t k = 0; k < prefs.size(); ++k) {
    double tensor_max_grad = 0.0;
    for (Index e = 0; e < prefs[k].size(); ++e) {
      double* slot = prefs[k].data + e;
      const double saved = *slot;
      *slot = saved + eps;
      const double up = lossAt();
      *slot = saved - eps;
      const double down = lossAt();
      *slot = saved;

      const double fd = (up - down) / (2.0 * eps);
      const double analytic = arefs[k].data[e];
      tensor_max_grad = std::max(tensor_max_grad, std::abs(analytic));
      const double denom = std::max(std::abs(fd), std::abs(analytic));
      if (denom < 1e-8) continue;
      REQUIRE(std::abs(fd - analytic) / denom < 1e-4,
              "tensor " << prefs[k].name << "[" << e << "]: analytic "
                        << analytic << " vs finite difference " << fd);
      ++checked;
    }
    REQUIRE(tensor_max_grad > 0.0,
            "tensor " << prefs[k].name
                      << " has an all-zero gradient; its check is vacuous");
  }
  std::cout << "  gradient suite: " << prefs.size() << " tensors, "
            << param_count << " parameters, " << checked
            << " nonzero entries compared\n";
  pass(3, "every learnable tensor passes central finite differences (rel err < 1e-4)");
}

// --------------------------------------------------------------------------
// 4. Composed-loss gradients on masked output dims are exactly zero — the
//    output layer's rows for those dims receive bit-zero gradient — for 50
//    random masks.

void criterion4() {
  DenoiserConfig cfg;
  cfg.pose_dim = 263;
  cfg.width = 8;
  cfg.depth = 1;
  cfg.cond_width = 4;
  cfg.text_width = 8;
  cfg.time_width = 4;

  Rng rng(2024);
  DenoiserParams params = initDenoiser(cfg, rng);
  const Index frames = 2;
  const Index t_steps = 8;

  for (int c = 0; c < 50; ++c) {
    IntVector bits(cfg.pose_dim);
    const int threshold = rng.uniformInt(2, 8);
    for (Index d = 0; d < cfg.pose_dim; ++d)
      bits[d] = rng.uniformInt(0, 9) < threshold ? 1 : 0;

    std::vector<Stage2Item> batch(2);
    for (Stage2Item& item : batch) {
      item.base.x0 = rng.normalMatrix(frames, cfg.pose_dim);
      item.base.x_t = rng.normalMatrix(frames, cfg.pose_dim);
      item.base.t = rng.uniformInt(1, static_cast<int>(t_steps));
      item.base.conds.text_embedding = rng.normalVector(cfg.text_width);
      item.base.conds.mask_bits = bits.cast<double>();
      item.base.conds.instruction_embedding = rng.normalVector(cfg.text_width);
      item.x_inter = rng.normalMatrix(frames, cfg.pose_dim);
      item.mask_bits = bits;
    }

    DenoiserLoss loss = stage2Loss(params, batch, t_steps);
    Index masked = 0;
    for (Index d = 0; d < cfg.pose_dim; ++d) {
      if (bits[d] != 1) continue;
      ++masked;
      REQUIRE(loss.grads.output.W.row(d).cwiseAbs().maxCoeff() == 0.0,
              "mask " << c << ": output row " << d
                      << " carries a nonzero weight gradient");
      REQUIRE(loss.grads.output.b[d] == 0.0,
              "mask " << c << ": output bias " << d << " gradient nonzero");
    }
    if (masked < cfg.pose_dim)
      REQUIRE(loss.grads.output.W.cwiseAbs().maxCoeff() > 0.0,
              "mask " << c << ": all output gradients vanished; vacuous");
  }
  pass(4, "masked output dims receive exactly-zero gradients (50 random masks)");
}

// --------------------------------------------------------------------------
// 5. The graph aggregation equals a brute-force per-node neighbor-sum
//    oracle (with independently re-derived symmetric normalization) to 1e-9
//    on every connected graph with up to six nodes, twenty draws each.

bool isConnected(int n, const std::vector<std::pair<int, int>>& edges) {
  if (n == 1) return true;
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack = {0};
  seen[0] = true;
  int reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
  }
  return reached == n;
}

void criterion5() {
  Stopwatch timer;
  // Labeled connected graph counts for n = 1..6; matching them proves the
  // enumeration really was exhaustive.
  const long kConnectedCounts[7] = {0, 1, 1, 4, 38, 728, 26704};
  Rng rng(99);
  const Index feat = 3, out_w = 2;

  for (int n = 1; n <= 6; ++n) {
    std::vector<std::pair<int, int>> all_pairs;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) all_pairs.emplace_back(i, j);

    long count = 0;
    for (unsigned long bitset = 0; bitset < (1UL << all_pairs.size());
         ++bitset) {
      std::vector<std::pair<int, int>> edges;
      for (std::size_t i = 0; i < all_pairs.size(); ++i)
        if (bitset & (1UL << i)) edges.push_back(all_pairs[i]);
      if (!isConnected(n, edges)) continue;
      ++count;

      for (int draw = 0; draw < 20; ++draw) {
        const int num_subsets = 1 + rng.uniformInt(0, 2);
        std::vector<Matrix> a_k(num_subsets, Matrix::Zero(n, n));
        for (const auto& [a, b] : edges) {
          const int k = rng.uniformInt(0, num_subsets - 1);
          a_k[k](a, b) = 1.0;
          a_k[k](b, a) = 1.0;
        }
        std::vector<Matrix> a_hat, weights;
        for (int k = 0; k < num_subsets; ++k) {
          a_hat.push_back(normalizeAdjacency(a_k[k]));
          weights.push_back(rng.normalMatrix(feat, out_w));
        }
        const Matrix x = rng.normalMatrix(n, feat);

        const Matrix got = aggregate(x, a_hat, weights);

        Matrix want = Matrix::Zero(n, out_w);
        for (int k = 0; k < num_subsets; ++k) {
          const Matrix m = a_k[k] + Matrix::Identity(n, n);
          const Vector deg = m.rowwise().sum();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              if (m(i, j) == 0.0) continue;
              const double coef = m(i, j) / std::sqrt(deg[i] * deg[j]);
              want.row(i) += coef * (x.row(j) * weights[k]);
            }
        }
        want = want.cwiseMax(0.0);

        REQUIRE((got - want).cwiseAbs().maxCoeff() <= 1e-9,
                "n=" << n << " bitset=" << bitset << " draw=" << draw
                     << ": aggregate deviates from the neighbor-sum oracle by "
                     << (got - want).cwiseAbs().maxCoeff());
      }
    }
    REQUIRE(count == kConnectedCounts[n],
            "n=" << n << ": enumerated " << count << " connected graphs, expected "
                 << kConnectedCounts[n]);
  }
  std::cout << "  exhaustive graph oracle finished in " << timer.seconds()
            << "s\n";
  pass(5, "graph aggregation matches the brute-force oracle on all connected graphs <= 6 nodes");
}

// --------------------------------------------------------------------------
// 6. The six single-part masks partition all 263 pose dims; the arm mask
//    owns 48 dims and the right-leg mask 50 (two of them contacts).

void criterion6() {
  const Skeleton skeleton = canonicalSkeleton();
  const PoseLayout layout = buildLayout(22, canonicalContactJoints());
  REQUIRE(layout.total_dim == 263, "canonical layout is " << layout.total_dim);

  const std::vector<BodyPart> parts = {BodyPart::Pelvis,  BodyPart::Torso,
                                       BodyPart::LeftArm, BodyPart::RightArm,
                                       BodyPart::LeftLeg, BodyPart::RightLeg};
  IntVector sum = IntVector::Zero(layout.total_dim);
  for (BodyPart part : parts) sum += partMask({part}, layout, skeleton).bits;
  REQUIRE((sum.array() == 1).all(),
          "the six single-part masks must cover every dim exactly once");

  const Index arm = partMask({BodyPart::LeftArm}, layout, skeleton).popcount();
  const Index leg = partMask({BodyPart::RightLeg}, layout, skeleton).popcount();
  REQUIRE(arm == 48, "left-arm popcount " << arm);
  REQUIRE(leg == 50, "right-leg popcount " << leg);
  pass(6, "six part masks partition the 263 dims; left arm 48, right leg 50");
}

// --------------------------------------------------------------------------
// 7. For 100 random pipelines (random params, seeds, masks, frame counts,
//    guidance scales), the final motion's mask dims are bit-identical to
//    the interactive stage's output.

void criterion7() {
  Stopwatch timer;
  const Skeleton skeleton = canonicalSkeleton();
  const PoseLayout layout = buildLayout(22, canonicalContactJoints());
  HashedBowEncoder encoder(8);

  PipelineConfig config;
  config.stage1.pose_dim = layout.total_dim;
  config.stage1.width = 8;
  config.stage1.depth = 1;
  config.stage1.cond_width = 4;
  config.stage1.text_width = 8;
  config.stage1.time_width = 2;
  config.stage2 = config.stage1;
  config.gcn.num_joints = 22;
  config.gcn.hidden_width = 4;
  config.gcn.num_layers = 1;
  config.gcn.conv_kernel = 2;
  config.gcn.conv_stride = 1;
  config.stage2.has_spatial = true;
  config.stage2.spatial_dim = config.gcn.spatialDim();

  const std::vector<BodyPart> all_parts = {
      BodyPart::Pelvis,  BodyPart::Torso,  BodyPart::LeftArm,
      BodyPart::RightArm, BodyPart::LeftLeg, BodyPart::RightLeg};

  for (int c = 0; c < 100; ++c) {
    Rng rng(5000 + c);
    GenerationContext ctx{encoder, makeSchedule(4, 0.01, 0.2), layout,
                          skeleton};
    PipelineParams params = initPipeline(config, skeleton, rng);

    std::set<BodyPart> chosen;
    const int want_parts = 1 + rng.uniformInt(0, 5);
    while (static_cast<int>(chosen.size()) < want_parts)
      chosen.insert(all_parts[rng.uniformInt(0, 5)]);
    InteractionSpec spec;
    for (BodyPart part : chosen) spec.pairs.push_back({part, "moves"});
    const PartMask mask = partMask(chosen, layout, skeleton);

    const Index frames = 2 + rng.uniformInt(0, 6);
    const Matrix x_inter = rng.normalMatrix(frames, layout.total_dim);

    GenerationRequest request;
    request.text = "case " + std::to_string(c);
    request.seed = 900 + c;
    request.num_frames = frames;
    request.guidance_scale = (c % 3 == 0) ? 0.0 : (c % 3 == 1 ? 1.0 : 2.5);
    request.stochastic = (c % 2 == 0);

    Rng gen_rng = rng.derive(1);
    const Matrix out = stage2Generate(request, spec, x_inter, mask,
                                      params.stage2, params.gcn, ctx, gen_rng);
    const Matrix got = gatherMasked(out, mask);
    const Matrix want = gatherMasked(x_inter, mask);
    REQUIRE((got.array() == want.array()).all(),
            "case " << c << ": mask dims differ from the interactive motion");
  }
  std::cout << "  overwrite sweep finished in " << timer.seconds() << "s\n";
  pass(7, "mask dims of the final motion are bit-identical to the interactive stage (100 pipelines)");
}

// --------------------------------------------------------------------------
// 8. The scripted-transcript corpus (>= 30 fixtures) replays exactly: valid
//    responses parse and canonicalize to the annotated spec; invalid ones
//    exhaust exactly three attempts and land on 'none'.

void criterion8() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(TEXTIM_TEST_DIR) / "fixtures" / "semantics";
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  REQUIRE(files.size() >= 30, "only " << files.size() << " fixtures found");

  int parsed = 0, exhausted = 0;
  for (const fs::path& file : files) {
    std::ifstream in(file);
    REQUIRE(in.good(), "cannot open " << file.string());
    const nlohmann::json doc = nlohmann::json::parse(in);

    std::vector<std::optional<std::string>> responses;
    for (const auto& r : doc.at("responses"))
      responses.push_back(r.is_null() ? std::optional<std::string>()
                                      : std::optional<std::string>(
                                            r.get<std::string>()));
    FixtureClient client(responses);
    const ExtractionResult result =
        extractWithRetry(doc.at("sentence").get<std::string>(), client);

    const nlohmann::json& expect = doc.at("expect");
    if (expect.at("fell_back").get<bool>()) {
      REQUIRE(result.fell_back && result.spec.none(),
              file.filename().string() << ": exhaustion must land on none");
      REQUIRE(result.transcripts.size() == 3 && client.calls() == 3,
              file.filename().string() << ": expected exactly 3 attempts, saw "
                                       << client.calls());
      ++exhausted;
    } else {
      REQUIRE(!result.fell_back,
              file.filename().string() << ": unexpectedly fell back");
      const nlohmann::json& pairs = expect.at("pairs");
      REQUIRE(result.spec.pairs.size() == pairs.size(),
              file.filename().string() << ": pair count "
                                       << result.spec.pairs.size() << " vs "
                                       << pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        REQUIRE(partName(result.spec.pairs[i].part) ==
                    pairs[i][0].get<std::string>(),
                file.filename().string() << ": pair " << i << " part");
        REQUIRE(result.spec.pairs[i].phrase == pairs[i][1].get<std::string>(),
                file.filename().string() << ": pair " << i << " phrase");
      }
      // Canonicalization: the canonical line format must re-parse to the
      // identical pairs on the first attempt.
      if (!result.spec.none()) {
        FixtureClient echo({canonicalResponse(result.spec)});
        const ExtractionResult again =
            extractWithRetry(doc.at("sentence").get<std::string>(), echo);
        REQUIRE(!again.fell_back && again.spec.pairs == result.spec.pairs,
                file.filename().string() << ": canonical form did not round trip");
        REQUIRE(again.transcripts.size() == 1,
                file.filename().string()
                    << ": canonical form needed a retry");
      }
      ++parsed;
    }
  }

  // Scripted always-invalid responses must consume all three attempts.
  const std::string sentence = "a person waves the left arm and walks";
  const std::vector<std::string> invalid = {
      "arm: waves the left arm",
      "head: nods",
      "left arm waves the left arm",
      "left arm: soars over the rooftops",
      "",
      "42",
      "left arm: waves the left arm\nhead: nods",
      "response: left arm",
  };
  for (const std::string& response : invalid) {
    FixtureClient client({response, response, response});
    const ExtractionResult result = extractWithRetry(sentence, client);
    REQUIRE(result.fell_back && result.spec.none(),
            "invalid response '" << response << "' did not fall back to none");
    REQUIRE(result.transcripts.size() == 3 && client.calls() == 3,
            "invalid response '" << response
                                 << "' did not exhaust exactly 3 attempts");
  }

  std::cout << "  transcript corpus: " << files.size() << " fixtures ("
            << parsed << " parsed, " << exhausted << " exhausted) + "
            << invalid.size() << " scripted invalid responses\n";
  pass(8, "semantics protocol: valid fixtures canonicalize, invalid ones exhaust 3 attempts to none");
}

// --------------------------------------------------------------------------
// 9. Metric identities: zero errors on identical inputs; a constant
//    (3, 4, 0) offset moves MPJPE to exactly 5; velocity error ignores
//    constant offsets; retrieval is perfect on matched embeddings.

void criterion9() {
  Rng rng(1234);
  const Index frames = 6, joints = 22;
  JointPositions a;
  a.positions = rng.normalMatrix(frames, 3 * joints);
  a.num_joints = joints;

  REQUIRE(mpjpe(a, a) == 0.0, "mpjpe on identical inputs");
  REQUIRE(mpvpe(a, a) == 0.0, "mpvpe on identical inputs");
  REQUIRE(jointSubsetJpe(a, a, handJoints()) == 0.0, "hand jpe on identical inputs");
  REQUIRE(jointSubsetJpe(a, a, footJoints()) == 0.0, "foot jpe on identical inputs");

  JointPositions b = a;
  for (Index j = 0; j < joints; ++j) {
    b.positions.col(3 * j + 0).array() += 3.0;
    b.positions.col(3 * j + 1).array() += 4.0;
  }
  const double offset_mpjpe = mpjpe(b, a);
  REQUIRE(std::abs(offset_mpjpe - 5.0) <= 1e-9,
          "constant (3,4,0) offset gave mpjpe " << offset_mpjpe);
  REQUIRE(mpvpe(b, a) <= 1e-12,
          "velocity error must ignore constant offsets, got " << mpvpe(b, a));

  std::vector<Vector> embeddings;
  for (int i = 0; i < 20; ++i) embeddings.push_back(rng.normalVector(8));
  REQUIRE(rPrecisionTop3(embeddings, embeddings, 10, 7) == 1.0,
          "matched embeddings must retrieve perfectly");
  REQUIRE(mmDist(embeddings, embeddings) == 0.0,
          "matched embeddings must have zero distance");
  pass(9, "metric identities hold (zero on identical, offset 5, translation-invariant velocity, perfect retrieval)");
}

// --------------------------------------------------------------------------
// 10. A 1-D two-mode distribution learned with the diffusion core: the
//     sample histogram's total-variation distance to the analytic mixture
//     stays under 0.15 with a fixed seed, in under three minutes.

double normCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

void criterion10() {
  Stopwatch timer;
  const double mu = 2.0, sigma = 0.25;
  const Index t_steps = 50;
  const DiffusionSchedule schedule = makeSchedule(t_steps, 0.005, 0.2);
  Rng rng(2468);

  const int kTrain = 4000;
  std::vector<double> data(kTrain);
  for (int i = 0; i < kTrain; ++i) {
    const double sign = rng.uniformInt(0, 1) == 0 ? -1.0 : 1.0;
    data[i] = sign * mu + sigma * rng.normal();
  }

  DenoiserConfig cfg;
  cfg.pose_dim = 1;
  cfg.width = 64;
  cfg.depth = 3;
  cfg.cond_width = 2;
  cfg.text_width = 2;
  cfg.time_width = 16;
  DenoiserParams params = initDenoiser(cfg, rng);

  ConditionBundle unconditional;
  unconditional.text_embedding = Vector::Zero(cfg.text_width);
  unconditional.mask_bits = Vector::Zero(cfg.pose_dim);
  unconditional.instruction_embedding = Vector::Zero(cfg.text_width);
  unconditional = unconditional.dropped();

  std::vector<TensorRef> refs = tensorRefs(params);
  AdamState adam = AdamState::forTensors(refs);
  const int kSteps = 16000, kBatch = 128;
  for (int step = 0; step < kSteps; ++step) {
    std::vector<DiffusionItem> batch(kBatch);
    for (DiffusionItem& item : batch) {
      Matrix x0(1, 1);
      x0(0, 0) = data[rng.uniformInt(0, kTrain - 1)];
      item.t = rng.uniformInt(1, static_cast<int>(t_steps));
      item.x0 = x0;
      item.x_t = forwardSample(x0, item.t, schedule, rng);
      item.conds = unconditional;
    }
    DenoiserLoss loss = stage1Loss(params, batch, t_steps);
    std::vector<TensorRef> grads = tensorRefs(loss.grads);
    // Staged decay: the sharp per-timestep posterior means need a fine
    // final learning rate to resolve the mode widths.
    const double lr =
        step < kSteps / 2 ? 2e-3 : (step < (3 * kSteps) / 4 ? 5e-4 : 1e-4);
    const StepOutcome outcome = adamStep(adam, refs, grads, lr);
    REQUIRE(outcome.applied, "training step " << step << ": " << outcome.diagnostic);
  }

  // Frame rows evolve independently, so one reverse chain draws the batch.
  const Index kSamples = 4000;
  DenoiseFn denoise = [&](const Matrix& x, int t) {
    return predictX0(params, x, t, t_steps, unconditional);
  };
  Rng sample_rng(13579);
  const Matrix samples =
      reverseSample(denoise, schedule, kSamples, 1, sample_rng, true);

  const int kBins = 40;
  const double lo = -3.5, hi = 3.5;
  std::vector<double> observed(kBins + 2, 0.0);
  for (Index i = 0; i < kSamples; ++i) {
    const double x = samples(i, 0);
    int bin;
    if (x < lo)
      bin = 0;
    else if (x >= hi)
      bin = kBins + 1;
    else
      bin = 1 + static_cast<int>((x - lo) / (hi - lo) * kBins);
    observed[bin] += 1.0 / kSamples;
  }

  auto mixtureCdf = [&](double x) {
    return 0.5 * (normCdf((x - mu) / sigma) + normCdf((x + mu) / sigma));
  };
  std::vector<double> expected(kBins + 2, 0.0);
  expected[0] = mixtureCdf(lo);
  expected[kBins + 1] = 1.0 - mixtureCdf(hi);
  for (int b = 0; b < kBins; ++b) {
    const double left = lo + (hi - lo) * b / kBins;
    const double right = lo + (hi - lo) * (b + 1) / kBins;
    expected[b + 1] = mixtureCdf(right) - mixtureCdf(left);
  }

  double tv = 0.0;
  for (std::size_t b = 0; b < observed.size(); ++b)
    tv += std::abs(observed[b] - expected[b]);
  tv *= 0.5;

  const double elapsed = timer.seconds();
  std::cout << "  two-mode sanity: tv distance " << tv << " in " << elapsed
            << "s\n";
  REQUIRE(tv < 0.15, "tv distance " << tv << " >= 0.15");
  REQUIRE(elapsed < 180.0, "two-mode run took " << elapsed << "s");
  pass(10, "1-D two-mode samples stay within tv 0.15 of the analytic mixture");
}

// --------------------------------------------------------------------------
// 11. Desk-scale end-to-end: synthesize 6 recipes x 30 at 16 frames, train
//     both stages in under 15 minutes, then on held-out interactive prompts
//     reach part-energy accuracy >= 0.8 and beat an unconditional baseline
//     on instructed-part position error by >= 20% relative.

void criterion11() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "textim_acceptance_e2e";
  fs::remove_all(dir);

  std::vector<SynthRecipe> recipes = defaultRecipes();
  for (SynthRecipe& recipe : recipes) recipe.duration_frames = 16;
  const std::vector<DatasetRecord> records =
      buildDataset(recipes, 30, 17, dir.string());
  REQUIRE(records.size() == 180, "dataset has " << records.size() << " records");

  std::vector<TrainItem> train_items;
  std::vector<const DatasetRecord*> held_out;
  for (const DatasetRecord& record : records) {
    if (record.split == "train") {
      TrainItem item;
      item.motion = readMotion((dir / record.path).string());
      item.caption = record.caption;
      item.spec = record.spec;
      train_items.push_back(std::move(item));
    } else if (!record.spec.none()) {
      held_out.push_back(&record);
    }
  }
  REQUIRE(!held_out.empty(), "no held-out interactive prompts");

  const PoseLayout layout = train_items[0].motion.layout;
  const Skeleton skeleton = canonicalSkeleton();
  HashedBowEncoder encoder(64);
  GenerationContext ctx{encoder, ScheduleSpec{}.make(), layout, skeleton};

  PipelineConfig config;
  config.stage1.pose_dim = layout.total_dim;
  config.stage1.width = 64;
  config.stage1.depth = 2;
  config.stage1.cond_width = 32;
  config.stage1.text_width = 64;
  config.stage1.time_width = 8;
  config.stage2 = config.stage1;
  config.gcn.num_joints = 22;
  config.gcn.hidden_width = 16;
  config.gcn.num_layers = 2;
  config.gcn.conv_kernel = 4;
  config.gcn.conv_stride = 2;
  config.stage2.has_spatial = true;
  config.stage2.spatial_dim = config.gcn.spatialDim();

  Rng init_rng(1);
  PipelineParams params = initPipeline(config, skeleton, init_rng);

  Stopwatch train_timer;
  TrainConfig tc;
  tc.steps = 1500;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.cond_dropout = 0.1;
  tc.seed = 11;
  const TrainResult stage1 = trainStage1(params.stage1, train_items, tc, ctx);
  tc.seed = 12;
  const TrainResult stage2 =
      trainStage2(params.stage2, params.gcn, train_items, tc, ctx);
  const double train_seconds = train_timer.seconds();
  std::cout << "  training " << train_seconds << "s; stage-1 loss "
            << stage1.loss_curve.front() << " -> " << stage1.loss_curve.back()
            << ", stage-2 loss " << stage2.loss_curve.front() << " -> "
            << stage2.loss_curve.back() << "\n";
  REQUIRE(train_seconds < 900.0,
          "two-stage training took " << train_seconds << "s (budget 900)");

  ExtractorFn extractor = [](const std::string& text) {
    return fallbackRuleExtractor(text);
  };

  std::vector<MotionSequence> generated;
  std::vector<BodyPart> instructed;
  double cond_err = 0.0, base_err = 0.0;
  int idx = 0;
  for (const DatasetRecord* record : held_out) {
    const MotionSequence gt = readMotion((dir / record->path).string());

    GenerationRequest request;
    request.text = record->caption;
    request.seed = 40000 + idx;
    request.num_frames = gt.numFrames();
    const GenerationTrace trace = generate(request, extractor, params, ctx);
    REQUIRE(!trace.spec.none(),
            "extractor missed the interaction in: " << record->caption);

    GenerationRequest blank = request;
    blank.text = "";
    const GenerationTrace baseline = generate(blank, extractor, params, ctx);

    const BodyPart part = record->spec.pairs[0].part;
    const std::vector<int> joints = skeleton.partJoints(part);
    const JointPositions gt_pos = toJointPositions(gt);
    cond_err += jointSubsetJpe(toJointPositions(trace.motion), gt_pos, joints);
    base_err +=
        jointSubsetJpe(toJointPositions(baseline.motion), gt_pos, joints);

    generated.push_back(trace.motion);
    instructed.push_back(part);
    ++idx;
  }
  cond_err /= static_cast<double>(held_out.size());
  base_err /= static_cast<double>(held_out.size());

  const double accuracy = partEnergyAccuracy(generated, skeleton, instructed);
  const double rel_win = (base_err - cond_err) / base_err;
  std::cout << "  held-out prompts " << held_out.size()
            << ": part_energy_accuracy " << accuracy
            << ", instructed-part error " << cond_err << " vs unconditional "
            << base_err << " (relative win " << 100.0 * rel_win << "%)\n";
  REQUIRE(accuracy >= 0.8, "part_energy_accuracy " << accuracy << " < 0.8");
  REQUIRE(rel_win >= 0.20,
          "relative instructed-part improvement " << 100.0 * rel_win
                                                  << "% < 20%");
  fs::remove_all(dir);
  pass(11, "end-to-end desk experiment meets accuracy and relative-error targets");
}

}  // namespace

int main() {
  std::cout << "acceptance gate: 11 criteria\n";
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  criterion11();
  std::cout << "acceptance: 11/11 criteria passed\n";
  return 0;
}
