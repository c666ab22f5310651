#include "chaincal/dataset.hpp"
#include "chaincal/error.hpp"
#include "chaincal/model_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

using namespace chaincal;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "chaincal_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

double sample_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("empty request") {
  GenerationSettings g;
  g.count = 0;
  CHECK(generate(default_icub_model(), g).samples.empty());
}

TEST_CASE("generated poses close both loops") {
  const RobotModel truth = default_icub_model();
  const Dataset& d = testing::clean_dataset();
  REQUIRE(d.size() == 120);
  CHECK(d.model_hash == model_hash(truth));
  CHECK(max_contact_discrepancy(d) <= 0.01);
  const WorkspaceBox box;
  for (const PoseSample& s : d.samples) {
    CHECK((s.target.array() >= box.min.array()).all());
    CHECK((s.target.array() <= box.max.array()).all());
    const Eigen::Vector3d la = end_effector_position(truth.left_arm, s.arm_joints(Arm::Left));
    const Eigen::Vector3d ra = end_effector_position(truth.right_arm, s.arm_joints(Arm::Right));
    CHECK((la - ra).norm() <= 0.01);
    CHECK((la - s.left_position).norm() < 1e-9);
    CHECK(joints_within_limits(truth.left_arm, s.arm_joints(Arm::Left)));
    CHECK(joints_within_limits(truth.right_arm, s.arm_joints(Arm::Right)));
    CHECK(joints_within_limits(truth.left_eye, s.eye_joints(Eye::Left)));
    CHECK(joints_within_limits(truth.right_eye, s.eye_joints(Eye::Right)));
    for (std::size_t k = 0; k < 4; ++k) {
      REQUIRE(s.true_pixels[k].has_value());
      CHECK(in_frame(*s.true_pixels[k], truth.intrinsics));
      CHECK(*s.observed_pixels[k] == *s.true_pixels[k]);
    }
    CHECK(s.contact_noise == Eigen::Vector3d::Zero());
  }
  const VisibilityStats v = visibility_stats(d);
  CHECK(v.both_eyes == d.size());
}

TEST_CASE("true pixels match an independent projection") {
  const RobotModel truth = default_icub_model();
  const auto& k = truth.intrinsics;
  for (const PoseSample& s : testing::clean_dataset().samples) {
    for (Eye eye : {Eye::Left, Eye::Right}) {
      const Eigen::Matrix4d eye_pose = testing::oracle_fk(truth.chain(chain_of(eye)), s.eye_joints(eye));
      for (Arm arm : {Arm::Left, Arm::Right}) {
        const Eigen::Matrix4d hand = testing::oracle_fk(truth.chain(chain_of(arm)), s.arm_joints(arm));
        const Eigen::Vector4d p = eye_pose.inverse() * hand.col(3);
        const PixelPoint px = *s.true_pixels[pair_index(arm, eye)];
        CHECK(px.u == doctest::Approx(k.fx * p.x() / p.z() + k.cx).epsilon(1e-12));
        CHECK(px.v == doctest::Approx(k.fy * p.y() / p.z() + k.cy).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("generation is deterministic and independent of the worker count") {
  GenerationSettings g;
  g.count = 24;
  g.seed = 5;
  const Dataset a = generate(default_icub_model(), g);
  g.jobs = 3;
  const Dataset b = generate(default_icub_model(), g);
  CHECK(a == b);
  g.seed = 6;
  CHECK_FALSE(generate(default_icub_model(), g) == a);
  // Per-sample streams: a longer run extends a shorter one.
  g.seed = 5;
  g.count = 30;
  const Dataset c = generate(default_icub_model(), g);
  CHECK(std::equal(a.samples.begin(), a.samples.end(), c.samples.begin()));
}

TEST_CASE("noise has the requested spread") {
  GenerationSettings g;
  g.count = 1;
  g.seed = 2;
  Dataset one = generate(default_icub_model(), g);
  Dataset big = one;
  big.samples.assign(10000, one.samples[0]);
  const Dataset noisy = apply_noise(big, {5.0, 5.0}, 99);
  CHECK(noisy.noise == NoiseSpec{5.0, 5.0});
  CHECK(noisy.noise_seed == 99);
  std::vector<double> tx, pu;
  for (const PoseSample& s : noisy.samples) {
    tx.push_back(s.contact_noise.x());
    pu.push_back(s.observed_pixels[1]->u - s.true_pixels[1]->u);
  }
  CHECK(sample_std(tx) >= 4.9);
  CHECK(sample_std(tx) <= 5.1);
  CHECK(sample_std(pu) >= 4.9);
  CHECK(sample_std(pu) <= 5.1);

  CHECK(apply_noise(big, {5.0, 5.0}, 99) == noisy);
  const Dataset zero = apply_noise(testing::clean_dataset(), {0.0, 0.0}, 1);
  CHECK(zero.samples == testing::clean_dataset().samples);
}

TEST_CASE("noisy subsets agree with noising the whole set") {
  const Dataset& d = testing::clean_dataset();
  const std::vector<std::size_t> idx{7, 3, 100, 42};
  CHECK(noisy_subset(d, idx, {2.0, 10.0}, 8) == apply_noise(d, {2.0, 10.0}, 8).select(idx));
}

TEST_CASE("split sizes and disjointness") {
  std::mt19937_64 rng(1);
  const Split s = split(5055, 10, 300, rng);
  CHECK(s.train.size() == 10);
  CHECK(s.test.size() == 300);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 310);
  CHECK(*all.rbegin() < 5055);

  std::mt19937_64 r1(4), r2(4);
  const Split a = split(200, 50, 100, r1);
  const Split b = split(200, 50, 100, r2);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);

  // The test set does not depend on the training size.
  std::mt19937_64 r3(4);
  CHECK(split(200, 10, 100, r3).test == a.test);

  std::mt19937_64 r4(0);
  CHECK(split(1, 0, 1, r4).test.size() == 1);
  CHECK_THROWS_AS(split(10, 5, 6, r4), ConfigError);
}

TEST_CASE("save and load round trip exactly") {
  const Dataset noisy = apply_noise(testing::clean_dataset(), {5.0, 2.0}, 3);
  const fs::path p = temp_file("roundtrip.jsonl");
  save_dataset(noisy, p);
  CHECK(load_dataset(p) == noisy);

  Dataset partial = noisy;
  partial.samples.resize(3);
  partial.samples[1].observed_pixels[2].reset();
  partial.samples[1].true_pixels[2].reset();
  save_dataset(partial, p);
  CHECK(load_dataset(p) == partial);
}

TEST_CASE("malformed dataset files") {
  Dataset d = testing::clean_dataset();
  d.samples.resize(2);
  const fs::path p = temp_file("bad.jsonl");
  save_dataset(d, p);
  std::vector<std::string> lines;
  {
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  REQUIRE(lines.size() == 3);

  auto write = [&](const std::vector<std::string>& ls) {
    std::ofstream out(p);
    for (const auto& l : ls) out << l << '\n';
  };

  auto shortened = lines;
  const auto pos = shortened[2].find("\"theta\":[");
  REQUIRE(pos != std::string::npos);
  shortened[2].replace(pos, 9, "\"theta\":[0.5,");
  write(shortened);
  try {
    load_dataset(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  auto versioned = lines;
  const auto vpos = versioned[0].find("\"version\":1");
  REQUIRE(vpos != std::string::npos);
  versioned[0].replace(vpos, 11, "\"version\":99");
  write(versioned);
  CHECK_THROWS_AS(load_dataset(p), UnsupportedVersionError);

  write({lines[0], lines[1]});
  CHECK_THROWS_AS(load_dataset(p), ParseError);

  CHECK_THROWS_AS(load_dataset(temp_file("does_not_exist.jsonl")), ParseError);
}

TEST_CASE("noise labels") {
  CHECK(NoiseSpec{5.0, 5.0}.label() == "5E5T");
  CHECK(NoiseSpec{2.0, 10.0}.label() == "10E2T");
  CHECK(NoiseSpec{0.5, 0.0}.label() == "0E0.5T");
}
