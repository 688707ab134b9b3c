#include "doctest.h"

#include <textim/io.hpp>
#include <textim/text_encoder.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

using namespace textim;

namespace {

std::string tmpPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

MotionSequence randomMotion(int frames, std::uint64_t seed) {
  MotionSequence motion;
  motion.layout = buildLayout(22, canonicalContactJoints());
  Rng rng(seed);
  motion.frames = rng.normalMatrix(frames, motion.layout.total_dim);
  return motion;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("text files round-trip and report failures") {
  std::string path = tmpPath("textim_io_text.txt");
  writeTextFile(path, "line one\nline two\n");
  CHECK(readTextFile(path) == "line one\nline two\n");
  CHECK_THROWS_AS(readTextFile("/nonexistent/dir/file.txt"), DataError);
  CHECK_THROWS_AS(writeTextFile("/nonexistent/dir/file.txt", "x"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("json files reject malformed content") {
  std::string path = tmpPath("textim_io_bad.json");
  writeTextFile(path, "{ not json ");
  CHECK_THROWS_AS(readJsonFile(path), DataError);
  writeTextFile(path, "{\"a\": 1}");
  CHECK(readJsonFile(path)["a"] == 1);
  std::filesystem::remove(path);
}

TEST_CASE("motion files round-trip bit-exactly with stable bytes") {
  MotionSequence motion = randomMotion(7, 42);
  std::string path = tmpPath("textim_io_motion.json");
  writeMotion(motion, path);
  MotionSequence loaded = readMotion(path);
  CHECK(loaded.fps == motion.fps);
  CHECK(loaded.layout.total_dim == motion.layout.total_dim);
  CHECK(loaded.layout.contact_joints == motion.layout.contact_joints);
  REQUIRE(loaded.frames.rows() == motion.frames.rows());
  CHECK((loaded.frames - motion.frames).cwiseAbs().maxCoeff() == 0.0);

  // Dumped bytes are deterministic: write -> read -> write gives the same
  // file, so checksums are meaningful.
  std::string bytes = readTextFile(path);
  std::string path2 = tmpPath("textim_io_motion2.json");
  writeMotion(loaded, path2);
  CHECK(readTextFile(path2) == bytes);
  std::filesystem::remove(path2);

  SUBCASE("malformed motion documents are data errors") {
    nlohmann::json doc = motionToJson(motion);
    doc.erase("fps");
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["format"] = "other";
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["version"] = 999;
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["frames"][2].erase(5);  // frame 2 now one value short
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["frames"][0][0] = "NaN";
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["fps"] = 0.0;
    CHECK_THROWS_AS(motionFromJson(doc), DataError);

    doc = motionToJson(motion);
    doc["num_joints"] = 1;  // too few joints for a layout
    CHECK_THROWS_AS(motionFromJson(doc), DataError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("interaction specs round-trip through json") {
  InteractionSpec spec;
  spec.pairs.push_back({BodyPart::LeftArm, "waves the left arm"});
  spec.pairs.push_back({BodyPart::RightLeg, "kicks with the right leg"});
  spec.residual_text = "a person happily";

  InteractionSpec loaded = specFromJson(specToJson(spec));
  CHECK(loaded == spec);

  InteractionSpec none;
  none.residual_text = "a person walks";
  CHECK(specFromJson(specToJson(none)) == none);

  nlohmann::json doc = specToJson(spec);
  doc["pairs"][0][0] = "head";  // not a body part
  CHECK_THROWS_AS(specFromJson(doc), DataError);
  doc = specToJson(spec);
  doc.erase("residual");
  CHECK_THROWS_AS(specFromJson(doc), DataError);
}

TEST_CASE("named tensors round-trip and validate strictly") {
  Matrix w(2, 3);
  w << 1.5, -2.25, 0.0, 4.0, 1e-300, -7.5;
  Vector b(2);
  b << 0.125, -3.0;
  std::vector<TensorRef> tensors = {
      {"layer.W", w.data(), w.rows(), w.cols()},
      {"layer.b", b.data(), b.rows(), 1},
  };

  nlohmann::json doc = tensorsToJson(tensors);
  Matrix w2 = Matrix::Zero(2, 3);
  Vector b2 = Vector::Zero(2);
  std::vector<TensorRef> into = {
      {"layer.W", w2.data(), 2, 3},
      {"layer.b", b2.data(), 2, 1},
  };
  tensorsFromJson(doc, into);
  CHECK((w2 - w).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b2 - b).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("strictness") {
    nlohmann::json missing = doc;
    missing.erase("layer.b");
    CHECK_THROWS_AS(tensorsFromJson(missing, into), DataError);

    nlohmann::json extra = doc;
    extra["layer.extra"] = doc["layer.b"];
    CHECK_THROWS_AS(tensorsFromJson(extra, into), DataError);

    nlohmann::json reshaped = doc;
    reshaped["layer.W"]["rows"] = 3;
    reshaped["layer.W"]["cols"] = 2;
    CHECK_THROWS_AS(tensorsFromJson(reshaped, into), DataError);

    nlohmann::json truncated = doc;
    truncated["layer.W"]["data"].erase(5);
    CHECK_THROWS_AS(tensorsFromJson(truncated, into), DataError);

    std::vector<TensorRef> dup = {tensors[0], tensors[0]};
    CHECK_THROWS_AS(tensorsToJson(dup), DataError);
  }

  SUBCASE("checkpoint wrapper stamps and checks the format header") {
    std::string path = tmpPath("textim_io_ckpt.json");
    writeCheckpoint(path, {{"note", "test"}}, tensors);
    RawCheckpoint raw = readCheckpoint(path);
    CHECK(raw.config["note"] == "test");
    tensorsFromJson(raw.tensors, into);
    CHECK((w2 - w).cwiseAbs().maxCoeff() == 0.0);

    nlohmann::json tampered = readJsonFile(path);
    tampered["format"] = "something-else";
    writeJsonFile(tampered, path);
    CHECK_THROWS_AS(readCheckpoint(path), DataError);
    std::filesystem::remove(path);
  }
}

TEST_CASE("word tokenizer lowercases alphanumeric runs") {
  std::vector<std::string> tokens =
      wordTokens("A person KICKS, then stands-still (x2).");
  std::vector<std::string> expected = {"a",      "person", "kicks", "then",
                                       "stands", "still",  "x2"};
  CHECK(tokens == expected);
  CHECK(wordTokens("").empty());
  CHECK(wordTokens("  ,.;  ").empty());
}

TEST_CASE("hashed bag-of-words embedding is deterministic and unit length") {
  HashedBowEncoder encoder(32);
  CHECK(encoder.width() == 32);

  Vector a = encoder.encode("a person waves the left arm");
  Vector b = encoder.encode("a person waves the left arm");
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));

  // Tokenization, not raw bytes, drives the embedding.
  Vector c = encoder.encode("A PERSON waves the left arm!");
  CHECK((a - c).cwiseAbs().maxCoeff() == 0.0);

  Vector d = encoder.encode("someone kicks with the right leg");
  CHECK((a - d).cwiseAbs().maxCoeff() > 0.0);

  CHECK(encoder.encode("").isZero(0.0));
  CHECK(encoder.encode("!!! ???").isZero(0.0));

  // Single token: one signed bucket gets the whole mass.
  Vector single = encoder.encode("walks");
  int nonzero = 0;
  for (Index i = 0; i < single.size(); ++i)
    if (single[i] != 0.0) ++nonzero;
  CHECK(nonzero == 1);
  CHECK(std::abs(single.cwiseAbs().maxCoeff()) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Repeating a token scales its bucket before normalization, so the
  // normalized embedding is unchanged.
  Vector twice = encoder.encode("walks walks");
  CHECK((single - twice).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(HashedBowEncoder(0), std::invalid_argument);
}

}  // TEST_SUITE
