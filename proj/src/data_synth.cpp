#include <textim/data_synth.hpp>

#include <textim/io.hpp>
#include <textim/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace textim {

namespace {

constexpr double kTau = 6.283185307179586;

std::string substitutePhrases(const std::string& tmpl,
                              const std::vector<InteractionPair>& actives) {
  std::string out = tmpl;
  for (size_t i = 0; i < actives.size(); ++i) {
    std::string key = "{" + std::to_string(i) + "}";
    size_t at = out.find(key);
    require(at != std::string::npos,
            "synth recipe: template is missing placeholder " + key);
    out.replace(at, key.size(), actives[i].phrase);
  }
  require(out.find('{') == std::string::npos,
          "synth recipe: template has unused placeholders");
  return out;
}

}  // namespace

void SynthRecipe::validate(const PoseLayout& layout) const {
  require(!name.empty(), "synth recipe: name must not be empty");
  require(noise >= 0.0, "synth recipe: noise must be non-negative");
  require(isNone() || amplitude > noise,
          "synth recipe: amplitude must exceed the noise level");
  require(frequency_hz > 0.0, "synth recipe: frequency must be positive");
  require(duration_frames >= 2, "synth recipe: need at least two frames");
  require(base_pose.size() == layout.total_dim,
          "synth recipe: base pose width mismatch");
  require(caption_templates.size() >= 3,
          "synth recipe: need at least three caption templates");
  std::set<BodyPart> seen;
  for (const InteractionPair& active : actives) {
    require(active.part != BodyPart::Pelvis,
            "synth recipe: pelvis cannot be an active part");
    require(!active.phrase.empty(), "synth recipe: empty active phrase");
    require(seen.insert(active.part).second,
            "synth recipe: duplicate active part");
  }
  for (const std::string& tmpl : caption_templates)
    substitutePhrases(tmpl, actives);  // throws on placeholder mismatch
}

Vector standingBasePose(const PoseLayout& layout) {
  Vector base = Vector::Zero(layout.total_dim);
  base[layout.root_height.begin] = 0.9;
  for (size_t c = 0; c < layout.contact_joints.size(); ++c)
    base[layout.contactDim(static_cast<int>(c))] = 1.0;
  return base;
}

namespace {

SynthRecipe limbRecipe(const std::string& name, BodyPart part,
                       const std::string& phrase, double frequency,
                       Index frames) {
  PoseLayout layout = buildLayout(22, canonicalContactJoints());
  SynthRecipe recipe;
  recipe.name = name;
  recipe.actives = {{part, phrase}};
  recipe.amplitude = 0.5;
  recipe.frequency_hz = frequency;
  recipe.noise = 0.01;
  recipe.duration_frames = frames;
  recipe.base_pose = standingBasePose(layout);
  // An active limb holds a raised reference posture and oscillates around
  // it: a wave lifts the arm, a kick lifts the leg. The raised base is what
  // separates the instructed motion from the rest pose shared by every
  // other recipe.
  const double lift = 0.6;
  Skeleton skeleton = canonicalSkeleton();
  for (int j : skeleton.partJoints(part)) {
    if (j == 0) continue;
    recipe.base_pose[layout.positionDim(j, 1)] += lift;
  }
  recipe.caption_templates = {"a person {0}", "someone slowly {0}",
                              "{0} while standing in place"};
  return recipe;
}

SynthRecipe noneRecipe(const std::string& name, double noise,
                       std::vector<std::string> templates) {
  PoseLayout layout = buildLayout(22, canonicalContactJoints());
  SynthRecipe recipe;
  recipe.name = name;
  recipe.amplitude = 0.0;
  recipe.frequency_hz = 1.0;
  recipe.noise = noise;
  recipe.duration_frames = 16;
  recipe.base_pose = standingBasePose(layout);
  recipe.caption_templates = std::move(templates);
  return recipe;
}

}  // namespace

std::vector<SynthRecipe> defaultRecipes() {
  std::vector<SynthRecipe> recipes;
  recipes.push_back(limbRecipe("wave-left-arm", BodyPart::LeftArm,
                               "waves the left arm", 1.5, 24));
  recipes.push_back(limbRecipe("wave-right-arm", BodyPart::RightArm,
                               "waves the right arm", 1.5, 24));
  recipes.push_back(limbRecipe("kick-left-leg", BodyPart::LeftLeg,
                               "kicks with the left leg", 1.0, 20));
  recipes.push_back(limbRecipe("kick-right-leg", BodyPart::RightLeg,
                               "kicks with the right leg", 1.0, 20));
  recipes.push_back(noneRecipe("walk-in-place", 0.02,
                               {"a person walks in place",
                                "someone is walking in place",
                                "a person keeps walking without moving away"}));
  recipes.push_back(noneRecipe("stand", 0.005,
                               {"a person stands still",
                                "someone is standing upright",
                                "a person remains still on the spot"}));
  return recipes;
}

SynthRecipe torsoBendRecipe() {
  SynthRecipe recipe = limbRecipe("torso-bend", BodyPart::Torso,
                                  "bends the torso forward", 0.8, 24);
  recipe.amplitude = 0.3;
  return recipe;
}

SynthRecipe combineRecipes(const SynthRecipe& a, const SynthRecipe& b) {
  require(!a.isNone() && !b.isNone(),
          "combineRecipes: both recipes must be interactive");
  SynthRecipe combined = a;
  combined.name = a.name + "+" + b.name;
  for (const InteractionPair& active : b.actives)
    combined.actives.push_back(active);
  combined.amplitude = std::max(a.amplitude, b.amplitude);
  combined.noise = std::min(a.noise, b.noise);
  combined.duration_frames = std::max(a.duration_frames, b.duration_frames);
  combined.caption_templates.clear();
  for (size_t i = 0; i < a.caption_templates.size() &&
                     i < b.caption_templates.size() &&
                     combined.caption_templates.size() < 3;
       ++i) {
    // "{0}" of the second recipe becomes the next placeholder slot.
    std::string second = b.caption_templates[i];
    for (size_t slot = b.actives.size(); slot-- > 0;) {
      std::string from = "{" + std::to_string(slot) + "}";
      std::string to = "{" + std::to_string(slot + a.actives.size()) + "}";
      size_t at = second.find(from);
      if (at != std::string::npos) second.replace(at, from.size(), to);
    }
    // Drop the leading subject of the second clause when present.
    for (const char* lead : {"a person ", "someone slowly ", "someone "}) {
      if (second.rfind(lead, 0) == 0) {
        second = second.substr(std::string(lead).size());
        break;
      }
    }
    combined.caption_templates.push_back(a.caption_templates[i] + " and " +
                                         second);
  }
  while (combined.caption_templates.size() < 3)
    combined.caption_templates.push_back(combined.caption_templates.front());

  std::set<BodyPart> parts;
  for (const InteractionPair& active : combined.actives)
    require(parts.insert(active.part).second,
            "combineRecipes: recipes share a body part");
  return combined;
}

SynthOutput synthMotion(const SynthRecipe& recipe, std::uint64_t seed) {
  PoseLayout layout = buildLayout(22, canonicalContactJoints());
  recipe.validate(layout);
  Skeleton skeleton = canonicalSkeleton();
  Rng rng(seed);

  const Index t_frames = recipe.duration_frames;
  MotionSequence motion;
  motion.layout = layout;
  motion.fps = 20.0;
  motion.frames = recipe.noise * rng.normalMatrix(t_frames, layout.total_dim);
  motion.frames.rowwise() += recipe.base_pose.transpose();

  // Sinusoidal displacement on the active parts' position and rotation dims.
  const double omega = kTau * recipe.frequency_hz / motion.fps;
  for (size_t k = 0; k < recipe.actives.size(); ++k) {
    const BodyPart part = recipe.actives[k].part;
    std::vector<int> joints = skeleton.partJoints(part);
    int index_in_part = 0;
    for (int j : joints) {
      const double phase =
          0.4 * static_cast<double>(index_in_part++) + 0.7 * static_cast<double>(k);
      for (Index t = 0; t < t_frames; ++t) {
        const double wave = std::sin(omega * static_cast<double>(t) + phase);
        motion.frames(t, layout.positionDim(j, 0)) += recipe.amplitude * wave;
        motion.frames(t, layout.positionDim(j, 2)) +=
            0.5 * recipe.amplitude * wave;
        motion.frames(t, layout.rotationDim(j, 0)) +=
            0.3 * recipe.amplitude * wave;
        motion.frames(t, layout.rotationDim(j, 1)) -=
            0.3 * recipe.amplitude * wave;
      }
    }
  }

  // Contacts are binary: planted feet, except a kicking leg lifts off.
  for (size_t c = 0; c < layout.contact_joints.size(); ++c) {
    const int joint = layout.contact_joints[c];
    double value = 1.0;
    for (const InteractionPair& active : recipe.actives) {
      const std::vector<int> joints = skeleton.partJoints(active.part);
      if (std::find(joints.begin(), joints.end(), joint) != joints.end())
        value = 0.0;
    }
    motion.frames.col(layout.contactDim(static_cast<int>(c))).setConstant(value);
  }

  // Velocity dims are exact finite differences; frame 0 is zero. The root
  // triplet differences the integrated root trajectory.
  JointPositions decoded = toJointPositions(motion);
  for (int a = 0; a < 3; ++a) motion.frames(0, layout.velocityDim(0, a)) = 0.0;
  for (Index t = 1; t < t_frames; ++t)
    for (int a = 0; a < 3; ++a)
      motion.frames(t, layout.velocityDim(0, a)) =
          decoded.positions(t, a) - decoded.positions(t - 1, a);
  for (int j = 1; j < layout.num_joints; ++j) {
    for (int a = 0; a < 3; ++a) {
      motion.frames(0, layout.velocityDim(j, a)) = 0.0;
      for (Index t = 1; t < t_frames; ++t)
        motion.frames(t, layout.velocityDim(j, a)) =
            motion.frames(t, layout.positionDim(j, a)) -
            motion.frames(t - 1, layout.positionDim(j, a));
    }
  }

  SynthOutput out;
  out.motion = std::move(motion);
  const int pick = rng.uniformInt(
      0, static_cast<int>(recipe.caption_templates.size()) - 1);
  out.caption = substitutePhrases(recipe.caption_templates[pick],
                                  recipe.actives);
  out.spec.pairs = recipe.actives;
  out.spec.residual_text = splitResidual(out.caption, out.spec);
  return out;
}

namespace {

nlohmann::json recordToJson(const DatasetRecord& record) {
  nlohmann::json doc = specToJson(record.spec);
  doc["path"] = record.path;
  doc["caption"] = record.caption;
  doc["split"] = record.split;
  return doc;
}

DatasetRecord recordFromJson(const nlohmann::json& doc) {
  DatasetRecord record;
  try {
    record.spec = specFromJson(doc);
    record.path = doc.at("path").get<std::string>();
    record.caption = doc.at("caption").get<std::string>();
    record.split = doc.at("split").get<std::string>();
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("manifest record: ") + err.what());
  }
  require(record.split == "train" || record.split == "test",
          "manifest record: split must be train or test");
  return record;
}

}  // namespace

std::vector<DatasetRecord> buildDataset(const std::vector<SynthRecipe>& recipes,
                                        int count_per_recipe,
                                        std::uint64_t seed,
                                        const std::string& out_dir) {
  require(!recipes.empty(), "buildDataset: no recipes");
  require(count_per_recipe >= 1, "buildDataset: count must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir + "/motions", ec);
  if (ec) throw DataError("buildDataset: cannot create " + out_dir);

  Rng base(seed);
  std::vector<DatasetRecord> records;
  for (size_t r = 0; r < recipes.size(); ++r) {
    // Seeded choice of which record indices form the test split.
    Rng split_rng = base.derive(static_cast<std::uint64_t>(r));
    std::vector<int> order(count_per_recipe);
    for (int i = 0; i < count_per_recipe; ++i) order[i] = i;
    const int test_count = std::max(1, count_per_recipe / 5);
    for (int k = 0; k < test_count; ++k) {
      int pick = split_rng.uniformInt(k, count_per_recipe - 1);
      std::swap(order[k], order[pick]);
    }
    std::set<int> test_indices(order.begin(), order.begin() + test_count);

    for (int i = 0; i < count_per_recipe; ++i) {
      const std::uint64_t record_seed =
          splitmix64(splitmix64(seed) ^
                     (static_cast<std::uint64_t>(r) * 1000003u +
                      static_cast<std::uint64_t>(i) + 1u));
      SynthOutput synth = synthMotion(recipes[r], record_seed);

      DatasetRecord record;
      record.path = "motions/" + recipes[r].name + "_" + std::to_string(i) +
                    ".json";
      record.caption = synth.caption;
      record.spec = synth.spec;
      record.split = test_indices.count(i) ? "test" : "train";
      writeMotion(synth.motion, out_dir + "/" + record.path);
      records.push_back(std::move(record));
    }
  }

  std::ostringstream manifest;
  for (const DatasetRecord& record : records)
    manifest << recordToJson(record).dump() << "\n";
  writeTextFile(out_dir + "/manifest.jsonl", manifest.str());
  return records;
}

std::vector<DatasetRecord> loadManifest(const std::string& manifest_path) {
  std::istringstream lines(readTextFile(manifest_path));
  std::vector<DatasetRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded())
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": malformed json");
    records.push_back(recordFromJson(doc));
  }
  require(!records.empty(), "manifest: no records");
  return records;
}

}  // namespace textim
