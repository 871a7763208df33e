#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dedqn/checkpoint.hpp"

using namespace dedqn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("dedqn_ck_" + std::to_string(::getpid()) + "_" +
                                                ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<char> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripForwardBitExact) {
  TempDir dir;
  const auto net = init_network(default_layer_sizes(), 21);
  const auto p = dir.path / "net.bin";
  save_weights(net, p);
  const auto back = load_weights(p);
  EXPECT_EQ(back.sizes(), net.sizes());
  EXPECT_EQ(back.fingerprint(), net.fingerprint());
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    State s;
    for (auto& v : s) v = rng.uniform();
    const auto a = net.forward(s), b = back.forward(s);
    ASSERT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 4), 0);
  }
}

TEST(Checkpoint, AdamStateAndSidecarRoundTrip) {
  TempDir dir;
  auto net = init_network({6, 5, 4}, 3);
  auto adam = AdamState::for_network(net, AdamConfig{3e-4, 0.8, 0.99, 1e-7});
  Batch b;
  b.states = Eigen::MatrixXd::Ones(6, 2);
  b.actions = {0, 3};
  b.targets = {1.0, -1.0};
  for (int k = 0; k < 3; ++k) train_step(net, adam, b);

  CheckpointInfo info;
  info.dim_max = 30;
  info.config_hash = "abc123";
  const auto p = dir.path / "ck.bin";
  save_checkpoint(p, net, &adam, info);
  ASSERT_TRUE(fs::exists(sidecar_path(p)));
  const auto ck = load_checkpoint(p);
  EXPECT_EQ(ck.net.fingerprint(), net.fingerprint());
  ASSERT_TRUE(ck.adam);
  EXPECT_EQ(ck.adam->step, 3u);
  EXPECT_EQ(ck.adam->config.learning_rate, 3e-4);
  EXPECT_EQ(ck.adam->config.beta1, 0.8);
  EXPECT_EQ(ck.adam->m.layers[0].weights, adam.m.layers[0].weights);
  EXPECT_EQ(ck.adam->v.layers[1].bias, adam.v.layers[1].bias);
  EXPECT_EQ(ck.info.dim_max, 30u);
  EXPECT_EQ(ck.info.config_hash, "abc123");
  EXPECT_EQ(ck.info.strategies, "rand1,rand2,rand_to_best2,curr_to_rand1");
}

TEST(Checkpoint, TruncatedFileRejected) {
  TempDir dir;
  const auto p = dir.path / "net.bin";
  save_weights(init_network({4, 3, 2}, 1), p);
  auto bytes = read_all(p);
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}, std::size_t{0}}) {
    write_all(p, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_THROW(load_weights(p), DataError) << cut;
  }
}

TEST(Checkpoint, CorruptionRejected) {
  TempDir dir;
  const auto p = dir.path / "net.bin";
  save_weights(init_network({4, 3, 2}, 1), p);
  auto bytes = read_all(p);
  bytes[bytes.size() / 2] ^= 0x10;
  write_all(p, bytes);
  EXPECT_THROW(load_weights(p), DataError);
}

TEST(Checkpoint, VersionMismatchRejected) {
  TempDir dir;
  const auto net = init_network({4, 3, 2}, 1);
  const auto p1 = dir.path / "layout.bin";
  CheckpointInfo old_layout;
  old_layout.feature_layout_version = kFeatureLayoutVersion + 1;
  save_checkpoint(p1, net, nullptr, old_layout);
  EXPECT_THROW(load_checkpoint(p1), DataError);

  const auto p2 = dir.path / "table.bin";
  CheckpointInfo reordered;
  reordered.strategies = "rand2,rand1,rand_to_best2,curr_to_rand1";
  save_checkpoint(p2, net, nullptr, reordered);
  EXPECT_THROW(load_checkpoint(p2), DataError);

  // Format version field bumped in an otherwise valid file.
  const auto p3 = dir.path / "format.bin";
  save_weights(net, p3);
  auto bytes = read_all(p3);
  bytes[8] = static_cast<char>(kCheckpointFormatVersion + 1);
  write_all(p3, bytes);
  try {
    load_checkpoint(p3);
    FAIL() << "expected a version error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, MissingFileRejected) {
  EXPECT_THROW(load_weights("/nonexistent/dir/net.bin"), DataError);
}

TEST(Checkpoint, NotACheckpoint) {
  TempDir dir;
  const auto p = dir.path / "junk.bin";
  write_all(p, std::vector<char>(64, 'x'));
  EXPECT_THROW(load_weights(p), DataError);
}
