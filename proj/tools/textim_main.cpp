#include "CLI11.hpp"

#include <textim/data_synth.hpp>
#include <textim/io.hpp>
#include <textim/llm_client.hpp>
#include <textim/metrics.hpp>
#include <textim/pipeline.hpp>
#include <textim/text_encoder.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace textim;

// ---------------------------------------------------------------------------
// Extraction backends shared by `extract` and `sample`.

struct ClientOptions {
  std::string kind = "fallback";  // fallback | fixture | http
  std::string fixture_path;
  HttpChatConfig http;
};

void addClientOptions(CLI::App* cmd, ClientOptions& opts) {
  cmd->add_option("--client", opts.kind, "Extraction backend")
      ->check(CLI::IsMember({"fallback", "fixture", "http"}))
      ->capture_default_str();
  cmd->add_option("--fixture", opts.fixture_path,
                  "Scripted responses for --client fixture: json array of "
                  "strings, null entries simulate transport failures");
  cmd->add_option("--api-host", opts.http.host, "Chat API scheme://host[:port]")
      ->capture_default_str();
  cmd->add_option("--api-path", opts.http.path, "Chat API endpoint path")
      ->capture_default_str();
  cmd->add_option("--model", opts.http.model, "Chat model name")
      ->capture_default_str();
  cmd->add_option("--api-key-env", opts.http.api_key_env,
                  "Environment variable holding the API key")
      ->capture_default_str();
}

// nullptr means: use the offline rule-based extractor directly.
std::unique_ptr<LlmClient> makeClient(const ClientOptions& opts) {
  if (opts.kind == "fallback") return nullptr;
  if (opts.kind == "fixture") {
    if (opts.fixture_path.empty())
      throw DataError("--client fixture needs --fixture FILE");
    nlohmann::json doc = readJsonFile(opts.fixture_path);
    if (!doc.is_array()) throw DataError("fixture file must be a json array");
    std::vector<std::optional<std::string>> responses;
    for (const auto& entry : doc) {
      if (entry.is_null())
        responses.push_back(std::nullopt);
      else if (entry.is_string())
        responses.push_back(entry.get<std::string>());
      else
        throw DataError("fixture entries must be strings or null");
    }
    return std::make_unique<FixtureClient>(std::move(responses));
  }
  // Retries swallow transport errors, so a missing key would silently fall
  // back to 'none'. A key that cannot exist is a configuration error; check
  // it before any request is made.
  const char* key = std::getenv(opts.http.api_key_env.c_str());
  if (key == nullptr || std::string(key).empty())
    throw ExternalServiceError("environment variable '" + opts.http.api_key_env +
                               "' is empty; it must hold the chat API key");
  return std::make_unique<HttpChatClient>(opts.http);
}

InteractionSpec runExtractor(const std::string& sentence, LlmClient* client,
                             bool verbose) {
  if (client == nullptr) {
    if (verbose) std::cout << "extractor: offline rules\n";
    return fallbackRuleExtractor(sentence);
  }
  ExtractionResult result = extractWithRetry(sentence, *client);
  if (verbose) {
    for (const LlmTranscript& t : result.transcripts) {
      std::cout << "attempt " << t.attempt << ": "
                << (t.transport_error ? "transport error" : verdictName(t.verdict));
      if (!t.detail.empty()) std::cout << " (" << t.detail << ")";
      std::cout << "\n";
    }
    if (result.fell_back)
      std::cout << "all attempts failed; treating the sentence as non-interactive\n";
  }
  return result.spec;
}

std::string partsBrief(const InteractionSpec& spec) {
  if (spec.none()) return "none";
  std::string out;
  for (BodyPart part : spec.partSet()) {
    if (!out.empty()) out += "+";
    out += partName(part);
  }
  return out;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
  std::string text;
  std::string manifest;
  ClientOptions client;
};

int runExtract(const ExtractArgs& args) {
  std::unique_ptr<LlmClient> client = makeClient(args.client);
  if (!args.text.empty()) {
    InteractionSpec spec = runExtractor(args.text, client.get(), true);
    std::cout << canonicalResponse(spec) << "\n";
    if (!spec.none()) std::cout << "residual: " << spec.residual_text << "\n";
    return 0;
  }
  std::vector<DatasetRecord> records = loadManifest(args.manifest);
  int matched = 0;
  for (const DatasetRecord& record : records) {
    InteractionSpec spec = runExtractor(record.caption, client.get(), false);
    const bool match = spec.partSet() == record.spec.partSet();
    matched += match ? 1 : 0;
    std::cout << (match ? "  ok " : " MISS") << "  expected=" << partsBrief(record.spec)
              << " got=" << partsBrief(spec) << "  \"" << record.caption << "\"\n";
  }
  std::cout << "matched " << matched << "/" << records.size() << " captions\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out_dir;
  int count = 30;
  std::uint64_t seed = 0;
  bool torso_bend = false;
};

int runSynth(const SynthArgs& args) {
  std::vector<SynthRecipe> recipes = defaultRecipes();
  if (args.torso_bend) recipes.push_back(torsoBendRecipe());
  std::vector<DatasetRecord> records =
      buildDataset(recipes, args.count, args.seed, args.out_dir);
  int none_count = 0;
  int test_count = 0;
  for (const DatasetRecord& record : records) {
    if (record.spec.none()) ++none_count;
    if (record.split == "test") ++test_count;
  }
  std::cout << "wrote " << records.size() << " motions (" << none_count
            << " non-interactive, " << test_count << " held out) under "
            << args.out_dir << "\n";
  std::cout << "manifest: " << args.out_dir << "/manifest.jsonl\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_dir;
  std::string out_path;
  int steps = 300;
  Index batch_size = 8;
  double lr = 1e-3;
  double cond_dropout = 0.1;
  std::uint64_t seed = 0;
  ScheduleSpec schedule;
  Index width = 64;
  int depth = 2;
  Index cond_width = 32;
  Index time_width = 8;
  Index encoder_width = 64;
  Index gcn_hidden = 16;
  int gcn_layers = 2;
  Index gcn_kernel = 4;
  Index gcn_stride = 2;
};

std::vector<TrainItem> loadSplit(const std::string& data_dir,
                                 const std::string& split) {
  std::vector<DatasetRecord> records = loadManifest(data_dir + "/manifest.jsonl");
  std::vector<TrainItem> items;
  for (const DatasetRecord& record : records) {
    if (split != "all" && record.split != split) continue;
    TrainItem item;
    item.motion = readMotion(data_dir + "/" + record.path);
    item.caption = record.caption;
    item.spec = record.spec;
    items.push_back(std::move(item));
  }
  if (items.empty())
    throw DataError("no '" + split + "' records in " + data_dir);
  return items;
}

double meanOver(const std::vector<double>& values, std::size_t begin,
                std::size_t end) {
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += values[i];
  return sum / static_cast<double>(end - begin);
}

void printLossSummary(const std::string& label, const std::vector<double>& curve) {
  const std::size_t window = std::min<std::size_t>(10, curve.size());
  std::cout << label << ": " << curve.size() << " steps, loss "
            << meanOver(curve, 0, window) << " -> "
            << meanOver(curve, curve.size() - window, curve.size())
            << " (mean over " << window << ")\n";
}

int runTrain(const TrainArgs& args) {
  std::vector<TrainItem> items = loadSplit(args.data_dir, "train");
  const PoseLayout layout = items[0].motion.layout;
  if (layout.num_joints != 22)
    throw DataError("training expects the canonical 22-joint layout, got " +
                    std::to_string(layout.num_joints) + " joints");
  for (const TrainItem& item : items)
    if (item.motion.layout.total_dim != layout.total_dim)
      throw DataError("dataset mixes pose widths");

  HashedBowEncoder encoder(args.encoder_width);
  GenerationContext ctx{encoder, args.schedule.make(), layout,
                        canonicalSkeleton()};

  PipelineConfig config;
  config.stage1.pose_dim = layout.total_dim;
  config.stage1.width = args.width;
  config.stage1.depth = args.depth;
  config.stage1.cond_width = args.cond_width;
  config.stage1.text_width = args.encoder_width;
  config.stage1.time_width = args.time_width;
  config.stage2 = config.stage1;
  config.gcn.num_joints = layout.num_joints;
  config.gcn.hidden_width = args.gcn_hidden;
  config.gcn.num_layers = args.gcn_layers;
  config.gcn.conv_kernel = args.gcn_kernel;
  config.gcn.conv_stride = args.gcn_stride;
  config.stage2.has_spatial = true;
  config.stage2.spatial_dim = config.gcn.spatialDim();

  Rng init_rng(args.seed);
  PipelineParams params = initPipeline(config, ctx.skeleton, init_rng);

  TrainConfig tc;
  tc.steps = args.steps;
  tc.batch_size = args.batch_size;
  tc.lr = args.lr;
  tc.cond_dropout = args.cond_dropout;

  tc.seed = args.seed + 1;
  TrainResult stage1 = trainStage1(params.stage1, items, tc, ctx);
  printLossSummary("stage 1", stage1.loss_curve);

  tc.seed = args.seed + 2;
  TrainResult stage2 = trainStage2(params.stage2, params.gcn, items, tc, ctx);
  printLossSummary("stage 2", stage2.loss_curve);

  writePipelineCheckpoint(args.out_path, params, args.schedule);
  std::cout << "checkpoint: " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string ckpt_path;
  std::string text;
  std::string out_path;
  std::string trace_path;
  std::uint64_t seed = 0;
  Index num_frames = 24;
  double guidance_scale = 2.0;
  bool deterministic = false;
  bool single_stage = false;
  ClientOptions client;
};

int runSample(const SampleArgs& args) {
  PipelineCheckpoint ckpt = readPipelineCheckpoint(args.ckpt_path, canonicalSkeleton());
  const PoseLayout layout = buildLayout(22, canonicalContactJoints());
  if (ckpt.params.stage1.config.pose_dim != layout.total_dim)
    throw DataError("checkpoint pose width " +
                    std::to_string(ckpt.params.stage1.config.pose_dim) +
                    " does not match the canonical layout (" +
                    std::to_string(layout.total_dim) + ")");

  HashedBowEncoder encoder(ckpt.params.stage1.config.text_width);
  GenerationContext ctx{encoder, ckpt.schedule.make(), layout,
                        canonicalSkeleton()};

  std::unique_ptr<LlmClient> client = makeClient(args.client);
  ExtractorFn extractor = [&client](const std::string& sentence) {
    return runExtractor(sentence, client.get(), true);
  };

  GenerationRequest request;
  request.text = args.text;
  request.seed = args.seed;
  request.num_frames = args.num_frames;
  request.guidance_scale = args.guidance_scale;
  request.two_stage = !args.single_stage;
  request.stochastic = !args.deterministic;

  GenerationTrace trace = generate(request, extractor, ckpt.params, ctx);
  writeMotion(trace.motion, args.out_path);
  if (!args.trace_path.empty())
    writeJsonFile(traceToJson(trace), args.trace_path);

  std::cout << "parts: " << partsBrief(trace.spec) << "\n";
  std::cout << "interactive dims: " << trace.mask.popcount() << "/"
            << layout.total_dim << "\n";
  std::cout << "motion: " << args.out_path << "\n";
  if (!args.trace_path.empty()) std::cout << "trace: " << args.trace_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string data_dir;
  std::string pred_dir;  // empty: evaluate the dataset against itself
  std::string split = "test";
  std::string out_path;
  std::uint64_t seed = 0;
  int pool_size = 32;
  Index encoder_width = 64;
  int encoder_epochs = 80;
  double encoder_lr = 0.02;
};

int runEval(const EvalArgs& args) {
  const std::string pred_dir = args.pred_dir.empty() ? args.data_dir : args.pred_dir;
  std::vector<DatasetRecord> records = loadManifest(args.data_dir + "/manifest.jsonl");

  std::vector<MotionSequence> gt, pred;
  std::vector<std::string> captions;
  std::vector<MotionSequence> instructed_pred;
  std::vector<BodyPart> instructed_parts;
  for (const DatasetRecord& record : records) {
    if (args.split != "all" && record.split != args.split) continue;
    gt.push_back(readMotion(args.data_dir + "/" + record.path));
    pred.push_back(readMotion(pred_dir + "/" + record.path));
    captions.push_back(record.caption);
    if (!record.spec.none()) {
      instructed_pred.push_back(pred.back());
      instructed_parts.push_back(record.spec.pairs[0].part);
    }
  }
  if (gt.empty())
    throw DataError("no '" + args.split + "' records in " + args.data_dir);
  const auto n = static_cast<Index>(gt.size());
  const Skeleton skeleton = canonicalSkeleton();

  double sum_mpjpe = 0.0, sum_mpvpe = 0.0, sum_hand = 0.0, sum_foot = 0.0;
  for (Index i = 0; i < n; ++i) {
    const JointPositions jp = toJointPositions(pred[i]);
    const JointPositions jg = toJointPositions(gt[i]);
    sum_mpjpe += mpjpe(jp, jg);
    sum_mpvpe += mpvpe(jp, jg);
    sum_hand += jointSubsetJpe(jp, jg, handJoints());
    sum_foot += jointSubsetJpe(jp, jg, footJoints());
  }

  HashedBowEncoder text_encoder(args.encoder_width);
  std::vector<Vector> text_embeddings;
  text_embeddings.reserve(captions.size());
  for (const std::string& caption : captions)
    text_embeddings.push_back(text_encoder.encode(caption));

  PooledLinearMotionEncoder motion_encoder = trainMotionEncoder(
      gt, text_embeddings, args.encoder_epochs, args.encoder_lr, args.seed);
  std::vector<Vector> motion_embeddings;
  motion_embeddings.reserve(pred.size());
  for (const MotionSequence& motion : pred)
    motion_embeddings.push_back(motion_encoder.encode(motion));

  const int pool = std::min<int>(args.pool_size, static_cast<int>(n));
  std::vector<MetricValue> report;
  report.push_back({"mpjpe", sum_mpjpe / static_cast<double>(n), n, 0});
  report.push_back({"mpvpe", sum_mpvpe / static_cast<double>(n), n, 0});
  report.push_back({"hand_jpe", sum_hand / static_cast<double>(n), n, 0});
  report.push_back({"foot_jpe", sum_foot / static_cast<double>(n), n, 0});
  report.push_back({"r_precision_top3",
                    rPrecisionTop3(motion_embeddings, text_embeddings, pool, args.seed),
                    n, args.seed});
  report.push_back({"mm_dist", mmDist(motion_embeddings, text_embeddings), n, 0});
  if (!instructed_parts.empty())
    report.push_back({"part_energy_accuracy",
                      partEnergyAccuracy(instructed_pred, skeleton, instructed_parts),
                      static_cast<Index>(instructed_parts.size()), 0});

  const std::string text = formatMetricReport(report);
  std::cout << text;
  if (!args.out_path.empty()) writeTextFile(args.out_path, text);
  return 0;
}

// ---------------------------------------------------------------------------
// export

struct ExportArgs {
  std::string motion_path;
  std::string out_path;
};

int runExport(const ExportArgs& args) {
  const MotionSequence motion = readMotion(args.motion_path);
  const JointPositions positions = toJointPositions(motion);
  std::ostringstream lines;
  for (Index t = 0; t < positions.numFrames(); ++t) {
    nlohmann::json joints = nlohmann::json::array();
    for (Index j = 0; j < positions.num_joints; ++j) {
      const Eigen::Vector3d p = positions.at(t, j);
      joints.push_back({p.x(), p.y(), p.z()});
    }
    lines << nlohmann::json{{"frame", t}, {"joints", joints}}.dump() << "\n";
  }
  writeTextFile(args.out_path, lines.str());
  std::cout << "wrote " << positions.numFrames() << " frames x "
            << positions.num_joints << " joints to " << args.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-masked two-stage motion generation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read defaults from an INI/TOML file with one section per "
                 "subcommand; explicit flags win");

  ExtractArgs extract_args;
  CLI::App* extract = app.add_subcommand(
      "extract", "Extract interacting body parts and phrases from text");
  auto* extract_input = extract->add_option_group("input");
  extract_input->add_option("--text", extract_args.text, "Sentence to analyze");
  extract_input->add_option("--manifest", extract_args.manifest,
                            "Dataset manifest whose captions are checked "
                            "against their stored annotations");
  extract_input->require_option(1);
  addClientOptions(extract, extract_args.client);

  SynthArgs synth_args;
  CLI::App* synth =
      app.add_subcommand("synth", "Generate the procedural motion dataset");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--count", synth_args.count, "Motions per recipe")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Dataset seed")->capture_default_str();
  synth->add_flag("--include-torso-bend", synth_args.torso_bend,
                  "Add the torso-bend recipe to the default six");

  TrainArgs train_args;
  CLI::App* train =
      app.add_subcommand("train", "Train both stages on a dataset");
  train->add_option("--data", train_args.data_dir, "Dataset directory")->required();
  train->add_option("--out", train_args.out_path, "Checkpoint path")->required();
  train->add_option("--steps", train_args.steps, "Optimizer steps per stage")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--batch-size", train_args.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", train_args.lr, "Learning rate")->capture_default_str();
  train->add_option("--cond-dropout", train_args.cond_dropout,
                    "Probability of dropping all conditions in training")
      ->capture_default_str();
  train->add_option("--seed", train_args.seed, "Training seed")->capture_default_str();
  train->add_option("--t-steps", train_args.schedule.t_steps, "Diffusion steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--beta-start", train_args.schedule.beta_start,
                    "First noise-variance increment")
      ->capture_default_str();
  train->add_option("--beta-end", train_args.schedule.beta_end,
                    "Last noise-variance increment")
      ->capture_default_str();
  train->add_option("--width", train_args.width, "Denoiser hidden width")
      ->capture_default_str();
  train->add_option("--depth", train_args.depth, "Denoiser residual blocks")
      ->capture_default_str();
  train->add_option("--cond-width", train_args.cond_width,
                    "Projected width per condition")
      ->capture_default_str();
  train->add_option("--time-width", train_args.time_width,
                    "Timestep embedding width (even)")
      ->capture_default_str();
  train->add_option("--encoder-width", train_args.encoder_width,
                    "Hashed text embedding width")
      ->capture_default_str();
  train->add_option("--gcn-hidden", train_args.gcn_hidden, "Graph hidden width")
      ->capture_default_str();
  train->add_option("--gcn-layers", train_args.gcn_layers, "Graph layers")
      ->capture_default_str();
  train->add_option("--gcn-kernel", train_args.gcn_kernel,
                    "Temporal conv kernel size")
      ->capture_default_str();
  train->add_option("--gcn-stride", train_args.gcn_stride, "Temporal conv stride")
      ->capture_default_str();

  SampleArgs sample_args;
  CLI::App* sample =
      app.add_subcommand("sample", "Generate motion from text with a checkpoint");
  sample->add_option("--ckpt", sample_args.ckpt_path, "Checkpoint path")->required();
  sample->add_option("--text", sample_args.text, "Prompt sentence")->required();
  sample->add_option("--out", sample_args.out_path, "Output motion path")->required();
  sample->add_option("--trace", sample_args.trace_path,
                     "Also write a generation trace json");
  sample->add_option("--seed", sample_args.seed, "Sampling seed")->capture_default_str();
  sample->add_option("--frames", sample_args.num_frames, "Frames to generate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sample->add_option("--guidance-scale", sample_args.guidance_scale,
                     "Classifier-free guidance scale")
      ->capture_default_str();
  sample->add_flag("--deterministic", sample_args.deterministic,
                   "Disable posterior noise in reverse diffusion");
  sample->add_flag("--single-stage", sample_args.single_stage,
                   "Skip the interactive stage even for interactive prompts");
  addClientOptions(sample, sample_args.client);

  EvalArgs eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Score motions against a reference dataset");
  eval_cmd->add_option("--data", eval_args.data_dir, "Reference dataset directory")
      ->required();
  eval_cmd->add_option("--pred", eval_args.pred_dir,
                       "Directory with predicted motions at the manifest's "
                       "relative paths (default: the reference itself)");
  eval_cmd->add_option("--split", eval_args.split, "Manifest split to score")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out_path, "Also write the report here");
  eval_cmd->add_option("--seed", eval_args.seed, "Retrieval sampling seed")
      ->capture_default_str();
  eval_cmd->add_option("--pool", eval_args.pool_size,
                       "Retrieval pool size (clamped to the record count)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--encoder-width", eval_args.encoder_width,
                       "Hashed text embedding width")
      ->capture_default_str();
  eval_cmd->add_option("--encoder-epochs", eval_args.encoder_epochs,
                       "Motion encoder training epochs")
      ->capture_default_str();
  eval_cmd->add_option("--encoder-lr", eval_args.encoder_lr,
                       "Motion encoder learning rate")
      ->capture_default_str();

  ExportArgs export_args;
  CLI::App* export_cmd = app.add_subcommand(
      "export", "Convert a motion file to per-frame joint positions (jsonl)");
  export_cmd->add_option("--motion", export_args.motion_path, "Motion file")
      ->required();
  export_cmd->add_option("--out", export_args.out_path, "Output jsonl path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help exits 0; bad usage exits 1
  }

  try {
    if (extract->parsed()) return runExtract(extract_args);
    if (synth->parsed()) return runSynth(synth_args);
    if (train->parsed()) return runTrain(train_args);
    if (sample->parsed()) return runSample(sample_args);
    if (eval_cmd->parsed()) return runEval(eval_args);
    if (export_cmd->parsed()) return runExport(export_args);
  } catch (const ExternalServiceError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
