// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "scd/baselines.hpp"
#include "scd/checkpoint.hpp"

namespace {

using namespace scd;
namespace fs = std::filesystem;
using checkpoint::FormatError;

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "scd_checkpoint_tests";
  fs::create_directories(dir);
  return dir / name;
}

model::ModelConfig config(model::Variant v = model::Variant::static_attention) {
  model::ModelConfig c;
  c.dim = 5;
  c.attention_dim = 4;
  c.context_size = 2;
  c.vocab_size = 11;
  c.variant = v;
  return c;
}

void randomize(model::Classifier<float>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  for (auto* p : m.parameters())
    for (auto& v : p->value()) v = u(rng);
}

std::string serialize(const checkpoint::CheckpointData& data) {
  std::ostringstream out(std::ios::binary);
  checkpoint::write(data, out);
  return out.str();
}

checkpoint::CheckpointData deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return checkpoint::read(in);
}

TEST(Format, ByteLayout) {
  checkpoint::CheckpointData data{{{"a", 1}}, {{"w", {2}, {1.0f, -0.5f}}}};
  const std::string bytes = serialize(data);
  const std::string cfg = data.config.dump();
  ASSERT_EQ(bytes.substr(0, 4), "SCD1");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), checkpoint::kFormatVersion);
  EXPECT_EQ(u32(8), cfg.size());
  EXPECT_EQ(bytes.substr(12, cfg.size()), cfg);
  std::size_t at = 12 + cfg.size();
  EXPECT_EQ(u32(at), 1u);
  at += 4;
  EXPECT_EQ(static_cast<unsigned char>(bytes[at]), 1u);  // u16 name length
  EXPECT_EQ(bytes[at + 1], 0);
  EXPECT_EQ(bytes[at + 2], 'w');
  EXPECT_EQ(static_cast<unsigned char>(bytes[at + 3]), 1u);  // rank
  EXPECT_EQ(u32(at + 4), 2u);
  EXPECT_EQ(u32(at + 8), std::bit_cast<std::uint32_t>(1.0f));
  EXPECT_EQ(u32(at + 12), std::bit_cast<std::uint32_t>(-0.5f));
  EXPECT_EQ(bytes.size(), at + 16);
}

TEST(Format, RejectsCorruption) {
  checkpoint::CheckpointData data{{{"k", "v"}}, {{"w", {3}, {1, 2, 3}}}};
  const std::string bytes = serialize(data);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(deserialize(bad), FormatError);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() - 1}) {
    EXPECT_THROW(deserialize(bytes.substr(0, cut)), FormatError) << cut;
  }
  EXPECT_THROW(deserialize(""), FormatError);
}

TEST(RoundTrip, EveryTensorBitIdentical) {
  for (auto v : model::all_variants()) {
    model::ScdModel<float> m(config(v), 3);
    randomize(m, 17);
    m.parameters()[0]->value()[0] = -0.0f;
    m.parameters()[0]->value()[1] = 1e-42f;  // subnormal
    const auto path = temp_file("rt_" + model::to_string(v) + ".ckpt");
    checkpoint::save_model(m, {{"run", {{"seed", 3}}}}, path.string());
    const auto loaded = checkpoint::load_model(path.string());
    EXPECT_EQ(loaded.config["run"]["seed"], 3);
    EXPECT_EQ(loaded.model->describe(), m.describe());
    auto a = m.parameters();
    auto b = loaded.model->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(a[i]->name(), b[i]->name());
      for (std::size_t k = 0; k < a[i]->size(); ++k) {
        ASSERT_EQ(std::bit_cast<std::uint32_t>(a[i]->value()[k]), std::bit_cast<std::uint32_t>(b[i]->value()[k]))
            << a[i]->name() << "[" << k << "]";
      }
    }
    // Saving the reloaded model reproduces the file byte for byte.
    const auto again = temp_file("rt2.ckpt");
    checkpoint::save_model(*loaded.model, {{"run", {{"seed", 3}}}}, again.string());
    std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(f1), {}), std::string(std::istreambuf_iterator<char>(f2), {}));
  }
}

TEST(RoundTrip, BaselinesRebuildFromDescription) {
  const baselines::NgramFeatureSpace space({{2}, {3}, {2, 3}});
  baselines::DnnModel<float> dnn(space, 4, 0.3, 1);
  randomize(dnn, 4);
  const auto path = temp_file("dnn.ckpt");
  checkpoint::save_model(dnn, {}, path.string());
  auto loaded = checkpoint::load_model(path.string());
  const auto feats = baselines::ngram_featurize({2, 3}, {3}, space);
  EXPECT_EQ(dynamic_cast<baselines::DnnModel<float>&>(*loaded.model).forward(feats), dnn.forward(feats));

  baselines::LogRegModel<float> lr(space);
  randomize(lr, 5);
  checkpoint::save_model(lr, {}, path.string());
  loaded = checkpoint::load_model(path.string());
  EXPECT_EQ(dynamic_cast<baselines::LogRegModel<float>&>(*loaded.model).forward(feats), lr.forward(feats));
}

TEST(Assign, RejectsUnknownMissingAndMisshapenTensors) {
  model::ScdModel<float> m(config(), 1);
  auto params = m.parameters();
  checkpoint::CheckpointData data;
  for (auto* p : params) data.tensors.push_back({p->name(), p->shape(), std::vector<float>(p->size(), 0.5f)});
  EXPECT_NO_THROW(checkpoint::assign(m, data));
  EXPECT_EQ(params[0]->value()[0], 0.5f);

  auto extra = data;
  extra.tensors.push_back({"mystery", {1}, {1.0f}});
  EXPECT_THROW(checkpoint::assign(m, extra), FormatError);

  auto missing = data;
  missing.tensors.pop_back();
  EXPECT_THROW(checkpoint::assign(m, missing), FormatError);

  auto misshapen = data;
  misshapen.tensors[0].shape = {1, misshapen.tensors[0].data.size()};
  EXPECT_THROW(checkpoint::assign(m, misshapen), FormatError);

  auto duplicate = data;
  duplicate.tensors.push_back(duplicate.tensors[0]);
  EXPECT_THROW(checkpoint::assign(m, duplicate), FormatError);
}

TEST(LoadModel, MissingFileAndUnknownKind) {
  EXPECT_ANY_THROW(checkpoint::load_model(temp_file("does_not_exist.ckpt").string()));
  EXPECT_THROW(checkpoint::make_classifier({{"kind", "svm"}}), FormatError);
  const auto path = temp_file("nomodel.ckpt");
  checkpoint::save_checkpoint({}, {{"x", 1}}, path.string());
  EXPECT_THROW(checkpoint::load_model(path.string()), FormatError);
}

TEST(Census, FullScaleAttentionCheckpoint) {
  model::ModelConfig c;
  c.dim = 200;
  c.attention_dim = 200;
  c.vocab_size = 1000;
  c.context_size = 2;
  c.variant = model::Variant::static_attention;
  model::ScdModel<float> m(c, 1);
  const auto path = temp_file("census.ckpt");
  checkpoint::save_model(m, {}, path.string());
  const auto data = checkpoint::load_checkpoint(path.string());
  std::size_t total = 0;
  for (const auto& t : data.tensors) total += t.data.size();
  EXPECT_EQ(total, model::parameter_count(c));
}

}  // namespace
