#include "doctest.h"

#include <textim/data_synth.hpp>
#include <textim/io.hpp>
#include <textim/metrics.hpp>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

using namespace textim;

namespace {

// Mean absolute deviation of a part's position dims across frames.
double partPositionMad(const MotionSequence& motion, const Skeleton& skel,
                       BodyPart part) {
  double total = 0.0;
  int count = 0;
  for (int j : skel.partJoints(part)) {
    if (j == 0) continue;
    for (int a = 0; a < 3; ++a) {
      auto col = motion.frames.col(motion.layout.positionDim(j, a));
      double mean = col.mean();
      total += (col.array() - mean).abs().mean();
      ++count;
    }
  }
  return total / count;
}

std::filesystem::path freshDir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("data_synth") {

TEST_CASE("same recipe and seed reproduce the output bit for bit") {
  SynthRecipe recipe = defaultRecipes()[0];
  SynthOutput a = synthMotion(recipe, 42);
  SynthOutput b = synthMotion(recipe, 42);
  CHECK((a.motion.frames - b.motion.frames).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.caption == b.caption);
  CHECK(a.spec == b.spec);

  SynthOutput c = synthMotion(recipe, 43);
  CHECK((a.motion.frames - c.motion.frames).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("active-limb dims dominate every other limb by 10x deviation") {
  Skeleton skel = canonicalSkeleton();
  SynthOutput out = synthMotion(defaultRecipes()[0], 7);  // wave-left-arm
  REQUIRE(out.spec.pairs.size() == 1);
  CHECK(out.spec.pairs[0].part == BodyPart::LeftArm);
  double active = partPositionMad(out.motion, skel, BodyPart::LeftArm);
  for (BodyPart other : {BodyPart::RightArm, BodyPart::LeftLeg,
                         BodyPart::RightLeg, BodyPart::Torso}) {
    CHECK(active >= 10.0 * partPositionMad(out.motion, skel, other));
  }
  CHECK(out.caption.find("waves the left arm") != std::string::npos);
}

TEST_CASE("velocity dims equal finite differences of stored positions") {
  const PoseLayout layout = buildLayout(22, canonicalContactJoints());
  for (const SynthRecipe& recipe : defaultRecipes()) {
    SynthOutput out = synthMotion(recipe, 11);
    const Matrix& f = out.motion.frames;

    for (int j = 1; j < 22; ++j)
      for (int a = 0; a < 3; ++a) {
        CHECK(f(0, layout.velocityDim(j, a)) == 0.0);
        for (Index t = 1; t < f.rows(); ++t) {
          double diff = f(t, layout.positionDim(j, a)) -
                        f(t - 1, layout.positionDim(j, a));
          CHECK(std::abs(f(t, layout.velocityDim(j, a)) - diff) < 1e-9);
        }
      }

    // Root triplet differences the integrated trajectory.
    JointPositions decoded = toJointPositions(out.motion);
    for (Index t = 1; t < f.rows(); ++t)
      for (int a = 0; a < 3; ++a) {
        double diff = decoded.positions(t, a) - decoded.positions(t - 1, a);
        CHECK(std::abs(f(t, layout.velocityDim(0, a)) - diff) < 1e-9);
      }
  }
}

TEST_CASE("non-interactive recipes emit uniform low-noise motion") {
  SynthRecipe stand = defaultRecipes()[5];
  CHECK(stand.isNone());
  SynthOutput out = synthMotion(stand, 3);
  CHECK(out.spec.none());
  CHECK(out.spec.residual_text == out.caption);

  Skeleton skel = canonicalSkeleton();
  for (BodyPart part : {BodyPart::LeftArm, BodyPart::RightArm,
                        BodyPart::LeftLeg, BodyPart::RightLeg,
                        BodyPart::Torso})
    CHECK(partPositionMad(out.motion, skel, part) < 0.05);

  // Standing base: height near 0.9, feet in contact.
  CHECK(out.motion.frames(0, out.motion.layout.root_height.begin) ==
        doctest::Approx(0.9).epsilon(0.1));
  CHECK(out.motion.frames(0, out.motion.layout.contactDim(0)) == 1.0);
}

TEST_CASE("ground-truth labels earn perfect part-energy accuracy") {
  Skeleton skel = canonicalSkeleton();
  std::vector<MotionSequence> motions;
  std::vector<BodyPart> labels;
  int idx = 0;
  for (const SynthRecipe& recipe : defaultRecipes()) {
    if (recipe.isNone()) continue;
    for (int i = 0; i < 5; ++i) {
      SynthOutput out = synthMotion(recipe, 100 + idx++);
      motions.push_back(std::move(out.motion));
      labels.push_back(recipe.actives[0].part);
    }
  }
  CHECK(partEnergyAccuracy(motions, skel, labels) == doctest::Approx(1.0));
}

TEST_CASE("kicking lifts the kicking foot's contacts only") {
  const PoseLayout layout = buildLayout(22, canonicalContactJoints());
  SynthOutput kick = synthMotion(defaultRecipes()[2], 5);  // kick-left-leg
  // Contact order is {7, 10, 8, 11}: left ankle, left foot, right ankle,
  // right foot.
  CHECK(kick.motion.frames.col(layout.contactDim(0)).isZero(0.0));
  CHECK(kick.motion.frames.col(layout.contactDim(1)).isZero(0.0));
  CHECK((kick.motion.frames.col(layout.contactDim(2)).array() == 1.0).all());
  CHECK((kick.motion.frames.col(layout.contactDim(3)).array() == 1.0).all());
}

TEST_CASE("dataset build writes 180 records with a third non-interactive") {
  std::filesystem::path dir = freshDir("textim_synth_dataset");
  std::vector<DatasetRecord> records =
      buildDataset(defaultRecipes(), 30, 2024, dir.string());
  REQUIRE(records.size() == 180);

  int none_count = 0, test_count = 0;
  std::set<std::string> paths;
  for (const DatasetRecord& record : records) {
    if (record.spec.none()) ++none_count;
    if (record.split == "test") ++test_count;
    CHECK(paths.insert(record.path).second);  // paths unique
    CHECK(std::filesystem::exists(dir / record.path));
  }
  CHECK(none_count == 60);
  CHECK(test_count == 36);  // six per recipe

  // Round trip: the manifest reproduces captions and specs exactly.
  std::vector<DatasetRecord> loaded =
      loadManifest((dir / "manifest.jsonl").string());
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].path == records[i].path);
    CHECK(loaded[i].caption == records[i].caption);
    CHECK(loaded[i].split == records[i].split);
    CHECK(loaded[i].spec == records[i].spec);
  }

  // Splits are disjoint by construction of unique paths.
  std::set<std::string> train_paths, test_paths;
  for (const DatasetRecord& r : records)
    (r.split == "train" ? train_paths : test_paths).insert(r.path);
  for (const std::string& p : test_paths) CHECK(train_paths.count(p) == 0);

  // A stored motion file loads back as a valid sequence.
  MotionSequence motion = readMotion((dir / records[0].path).string());
  CHECK(motion.frames.rows() == 24);
  CHECK(motion.layout.total_dim == 263);

  // Rebuilding with the same seed reproduces the records.
  std::filesystem::path dir2 = freshDir("textim_synth_dataset_b");
  std::vector<DatasetRecord> again =
      buildDataset(defaultRecipes(), 30, 2024, dir2.string());
  REQUIRE(again.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(again[i].caption == records[i].caption);
    CHECK(again[i].split == records[i].split);
  }
  CHECK(readTextFile((dir / "manifest.jsonl").string()) ==
        readTextFile((dir2 / "manifest.jsonl").string()));

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("combined recipes move both parts and phrase both actions") {
  std::vector<SynthRecipe> defaults = defaultRecipes();
  SynthRecipe combined = combineRecipes(defaults[0], defaults[3]);
  REQUIRE(combined.actives.size() == 2);

  SynthOutput out = synthMotion(combined, 17);
  CHECK(out.caption.find("waves the left arm") != std::string::npos);
  CHECK(out.caption.find("kicks with the right leg") != std::string::npos);
  REQUIRE(out.spec.pairs.size() == 2);

  Skeleton skel = canonicalSkeleton();
  double arm = partPositionMad(out.motion, skel, BodyPart::LeftArm);
  double leg = partPositionMad(out.motion, skel, BodyPart::RightLeg);
  for (BodyPart other : {BodyPart::RightArm, BodyPart::LeftLeg}) {
    double idle = partPositionMad(out.motion, skel, other);
    CHECK(arm >= 10.0 * idle);
    CHECK(leg >= 10.0 * idle);
  }

  CHECK_THROWS_AS(combineRecipes(defaults[0], defaults[0]),
                  std::invalid_argument);
  CHECK_THROWS_AS(combineRecipes(defaults[0], defaults[4]),
                  std::invalid_argument);  // none recipe
}

TEST_CASE("the extra torso recipe bends the torso above the limbs") {
  SynthRecipe torso = torsoBendRecipe();
  CHECK(torso.actives[0].part == BodyPart::Torso);
  SynthOutput out = synthMotion(torso, 23);
  Skeleton skel = canonicalSkeleton();
  double active = partPositionMad(out.motion, skel, BodyPart::Torso);
  CHECK(active >= 10.0 * partPositionMad(out.motion, skel, BodyPart::LeftArm));
}

TEST_CASE("recipe validation rejects malformed recipes") {
  PoseLayout layout = buildLayout(22, canonicalContactJoints());
  SynthRecipe recipe = defaultRecipes()[0];
  recipe.validate(layout);

  SynthRecipe bad = recipe;
  bad.amplitude = bad.noise;  // must exceed the noise level
  CHECK_THROWS_AS(bad.validate(layout), std::invalid_argument);

  bad = recipe;
  bad.caption_templates.resize(2);
  CHECK_THROWS_AS(bad.validate(layout), std::invalid_argument);

  bad = recipe;
  bad.actives[0].part = BodyPart::Pelvis;
  CHECK_THROWS_AS(bad.validate(layout), std::invalid_argument);

  bad = recipe;
  bad.caption_templates[1] = "a person does something";  // placeholder gone
  CHECK_THROWS_AS(bad.validate(layout), std::invalid_argument);

  bad = recipe;
  bad.duration_frames = 1;
  CHECK_THROWS_AS(bad.validate(layout), std::invalid_argument);
}

}  // TEST_SUITE
