#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "cade/net/checkpoint.hpp"
#include "cade/net/network.hpp"
#include "cade/net/network_spec.hpp"
#include "cade/net/train.hpp"
#include "../support/gradcheck.hpp"
#include "../support/tables.hpp"

using namespace cade;
using namespace cade::net;

namespace {

std::size_t dense_params(std::size_t in, std::size_t out) { return out * (in + 1); }
std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k) { return cout * (cin * k * k + 1); }

// Independent tally of the d-cnn parameter total for a filter assignment.
std::size_t dcnn_total(const std::array<std::size_t, 4>& f) {
  std::size_t n = conv_params(4, f[0], 3) + conv_params(f[0], f[0], 3);
  n += conv_params(f[0], f[1], 3) + conv_params(f[1], f[1], 3);
  n += conv_params(f[1], f[2], 3) + conv_params(f[2], f[2], 3);
  n += conv_params(f[2], f[3], 5) + conv_params(f[3], f[3], 5);
  n += dense_params(f[3] * 2 * 2, 1200) + dense_params(1200, 1200) + dense_params(1200, 4);
  return n;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cade_unit_" + name);
}

}  // namespace

TEST_CASE("classifier parameter count and shape trace") {
  const NetworkSpec spec = build_ccnn();
  CHECK(param_count(spec) == testing::kCcnnParams);
  CHECK(testing::table_mismatches(shape_trace(spec), testing::kCcnnTable).empty());
  CHECK(weighted_layer_count(spec) == 12);
  CHECK(spec.head == HeadKind::softmax);
  CHECK(spec.outputs() == 2);
}

TEST_CASE("detector parameter count and shape trace") {
  const NetworkSpec spec = build_dcnn();
  CHECK(param_count(spec) == testing::kDcnnParams);
  const auto trace = shape_trace(spec);
  CHECK(testing::table_mismatches(trace, testing::kDcnnTable).empty());
  CHECK(weighted_layer_count(spec) == 15);
  CHECK(spec.head == HeadKind::linear);
  CHECK(spec.outputs() == 4);
  for (const auto& l : spec.layers) {
    if (l.label == "Out") continue;
    CHECK(l.label.rfind("Out", 0) != 0);
  }
  CHECK(std::holds_alternative<nn::DenseSpec>(spec.layers.back().kind));
}

TEST_CASE("only the output-column filter assignment gives the detector total") {
  CHECK(dcnn_total({32, 32, 64, 128}) == testing::kDcnnParams);
  CHECK(dcnn_total({32, 64, 128, 128}) != testing::kDcnnParams);
  CHECK(dense_params(8192, 550) == 4'506'150);
}

TEST_CASE("param_count agrees with the stored parameter tensors") {
  Rng rng(1);
  for (const auto& spec : {build_ccnn(), build_dcnn()}) {
    std::size_t total = 0;
    for (const auto& p : parameter_layout(spec)) total += element_count(p.dims);
    CHECK(total == param_count(spec));
  }
  for (int i = 0; i < 10; ++i) {
    const auto spec = testing::random_small_net(rng, i % 2 ? HeadKind::softmax : HeadKind::linear);
    const auto net = Network<double>::initialize(spec, rng);
    std::size_t total = 0;
    for (const auto& t : net.params()) total += t.size();
    CHECK(total == param_count(spec));
  }
}

TEST_CASE("ablation options change the builders") {
  ArchOptions leaky;
  leaky.leaky_alpha = 0.2;
  const auto spec = build_ccnn(leaky);
  std::size_t leaky_layers = 0;
  for (const auto& l : spec.layers) {
    if (const auto* a = std::get_if<nn::ActivationKind>(&l.kind)) {
      CHECK(a->kind == nn::ActivationKind::Kind::leaky_relu);
      ++leaky_layers;
    }
  }
  CHECK(leaky_layers == 8);
  CHECK(param_count(spec) == testing::kCcnnParams);

  ArchOptions extra;
  extra.extra_block = true;
  CHECK(weighted_layer_count(build_ccnn(extra)) == 15);
  CHECK(weighted_layer_count(build_dcnn(extra)) == 18);

  ArchOptions k5;
  k5.kernel_size = 5;
  const auto trace = shape_trace(build_ccnn(k5));
  CHECK(trace.front().output == Dims{32, 92, 92});

  ArchOptions drop;
  drop.dropout = 0.3;
  for (const auto& l : build_dcnn(drop).layers) {
    if (const auto* d = std::get_if<nn::DropoutSpec>(&l.kind)) CHECK(d->p == 0.3);
  }
}

TEST_CASE("validate rejects a second flatten and a flatten before a pool") {
  NetworkSpec spec = build_ccnn();
  auto twice = spec;
  twice.layers.insert(twice.layers.end() - 1, Layer{"again", Flatten{}});
  CHECK_THROWS_AS(validate(twice), SpecError);
  NetworkSpec early;
  early.input_dims = {1, 4, 4};
  early.layers = {{"flatten", Flatten{}}, {"Out", nn::DenseSpec{16, 2}}};
  CHECK_NOTHROW(validate(early));
  early.layers.insert(early.layers.begin() + 1, Layer{"P", nn::PoolSpec{}});
  CHECK_THROWS(validate(early));
}

TEST_CASE("zero weights and zero image give an even softmax") {
  const NetworkSpec spec = build_ccnn();
  std::vector<TensorF> params;
  for (const auto& p : parameter_layout(spec)) params.emplace_back(p.dims, 0.0f);
  const Network<float> net(spec, params);
  const TensorF out = net.forward(TensorF({1, 4, 96, 96}, 0.0f));
  CHECK(out.dims() == Dims{1, 2});
  CHECK(out[0] == 0.5f);
  CHECK(out[1] == 0.5f);
}

TEST_CASE("forward: empty batch, determinism, normalised rows") {
  Rng rng(2);
  const auto spec = testing::random_small_net(rng, HeadKind::softmax);
  const auto net = Network<float>::initialize(spec, rng);
  Dims empty{0};
  empty.insert(empty.end(), spec.input_dims.begin(), spec.input_dims.end());
  CHECK(net.forward(TensorF(empty)).dims() == Dims{0, 2});
  Dims batch{5};
  batch.insert(batch.end(), spec.input_dims.begin(), spec.input_dims.end());
  TensorF x(batch);
  for (auto& v : x.values()) v = float(rng.normal());
  const TensorF a = net.forward(x), b = net.forward(x);
  CHECK(a == b);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.at(i, 0) + a.at(i, 1) == doctest::Approx(1.0).epsilon(1e-6));
  Dims wrong = batch;
  wrong[1] += 1;
  CHECK_THROWS(net.forward(TensorF(wrong)));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto head = seed % 2 ? HeadKind::softmax : HeadKind::linear;
    const auto r = testing::gradient_check(seed, head);
    INFO(r.description);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Rng rng(3);
  const auto spec = testing::random_small_net(rng, HeadKind::linear);
  auto ckpt = to_checkpoint(Network<float>::initialize(spec, rng));
  ckpt.set_stat("std.mean.T1", 0.1234567890123);
  ckpt.set_stat("hp.rho", 0.95);
  const auto bytes = encode_checkpoint(ckpt);
  const auto back = decode_checkpoint(bytes);
  CHECK(back == ckpt);
  CHECK(encode_checkpoint(back) == bytes);
  const auto path = temp_path("rt.ckpt");
  save_checkpoint(ckpt, path);
  CHECK(load_checkpoint(path) == ckpt);
  std::filesystem::remove(path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MIC1");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);
}

TEST_CASE("damaged checkpoints raise format errors") {
  Rng rng(4);
  const auto ckpt = to_checkpoint(Network<float>::initialize(testing::random_small_net(rng, HeadKind::softmax), rng));
  auto bytes = encode_checkpoint(ckpt);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + std::ptrdiff_t(cut))),
                    FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
}

TEST_CASE("a checkpoint for another network names the first bad tensor") {
  Rng rng(5);
  const auto spec = testing::random_small_net(rng, HeadKind::linear);
  auto ckpt = to_checkpoint(Network<float>::initialize(spec, rng));
  CHECK_NOTHROW(check_compatible(ckpt, spec));
  ckpt.tensors[2].tensor = TensorF({1});
  try {
    check_compatible(ckpt, spec);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(ckpt.tensors[2].name) != std::string::npos);
  }
}

TEST_CASE("architecture metadata rebuilds the network description") {
  ArchOptions o;
  o.leaky_alpha = 0.2;
  o.extra_block = true;
  Checkpoint ckpt;
  record_architecture(ckpt, NetKind::dcnn, o);
  const auto spec = spec_from_checkpoint(ckpt);
  CHECK(spec.kind == NetKind::dcnn);
  CHECK(param_count(spec) == param_count(build_dcnn(o)));
  CHECK_THROWS_AS(spec_from_checkpoint(Checkpoint{}), ConfigError);
  CHECK(net_kind_from_string("ccnn") == NetKind::ccnn);
  CHECK_THROWS_AS(net_kind_from_string("rcnn"), ConfigError);
}

namespace {

// Two well separated clusters in 2 features, laid out as 2 x 1 x 1 images.
Dataset separable_toy(Rng& rng, std::size_t n) {
  Dataset d;
  d.images = TensorF({n, 2, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 1;
    d.images[2 * i] = float(2.0 * ((pos ? 1.5 : -1.5) + rng.normal(0, 0.3)));
    d.images[2 * i + 1] = float(2.0 * ((pos ? -1.0 : 1.0) + rng.normal(0, 0.3)));
    d.labels.push_back(pos ? 1.0f : 0.0f);
  }
  return d;
}

NetworkSpec logistic_spec() {
  NetworkSpec s;
  s.input_dims = {2, 1, 1};
  s.head = HeadKind::softmax;
  s.layers = {{"flatten", Flatten{}}, {"Out", nn::DenseSpec{2, 2}}};
  return s;
}

}  // namespace

TEST_CASE("a linearly separable toy trains below 0.05 cross-entropy within 200 steps") {
  Rng rng(6);
  const Dataset data = separable_toy(rng, 64);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 50;  // 4 steps per epoch
  cfg.augment = false;
  cfg.validation_fraction = 0.0;
  cfg.optimizer.epsilon = 1e-5;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    const auto r = train(logistic_spec(), data, cfg);
    INFO("seed " << seed << ": " << r.initial_loss << " -> " << r.final_loss);
    CHECK(r.final_loss < 0.05);
    CHECK(r.final_loss <= r.initial_loss);
    CHECK(r.epochs.size() == 50);
    CHECK(std::isnan(r.epochs.back().validation_loss));
  }
}

TEST_CASE("training is reproducible and sensitive to augmentation") {
  Rng rng(7);
  Dataset data;
  const std::size_t n = 12;
  data.images = TensorF({n, 1, 8, 8});
  for (auto& v : data.images.values()) v = float(rng.normal());
  for (std::size_t i = 0; i < n; ++i) data.boxes.push_back(BoxF{1.0 + double(i % 3), 2, 3, 4});
  NetworkSpec spec;
  spec.input_dims = {1, 8, 8};
  spec.head = HeadKind::linear;
  spec.layers = {{"C1", nn::ConvSpec{1, 2, 3, 1, nn::PadMode::same}},
                 {"C1.act", nn::ActivationKind::relu()},
                 {"P1", nn::PoolSpec{}},
                 {"flatten", Flatten{}},
                 {"FC1", nn::DenseSpec{32, 6}},
                 {"FC1.drop", nn::DropoutSpec{0.5}},
                 {"Out", nn::DenseSpec{6, 4}}};
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.validation_fraction = 0.25;
  const auto a = train(spec, data, cfg), b = train(spec, data, cfg);
  CHECK(a.checkpoint == b.checkpoint);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  CHECK(std::isfinite(a.epochs.back().validation_loss));
  cfg.augment = false;
  const auto c = train(spec, data, cfg);
  CHECK_FALSE(c.checkpoint == a.checkpoint);
  CHECK(a.checkpoint.require_stat("hp.augment") == 1.0);
  CHECK(c.checkpoint.require_stat("hp.augment") == 0.0);
}

TEST_CASE("training configuration errors") {
  Rng rng(8);
  const Dataset data = separable_toy(rng, 8);
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(logistic_spec(), data, cfg), ConfigError);
  cfg.batch_size = 4;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(logistic_spec(), data, cfg), ConfigError);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(logistic_spec(), Dataset{}, cfg), ArgumentError);
  Dataset bad = data;
  bad.labels[0] = 0.5f;
  CHECK_THROWS_AS(train(logistic_spec(), bad, cfg), ConfigError);
}

TEST_CASE("a non-finite loss aborts with the batch named") {
  Rng rng(9);
  Dataset data = separable_toy(rng, 8);
  NetworkSpec spec;
  spec.input_dims = {2, 1, 1};
  spec.head = HeadKind::linear;
  spec.layers = {{"flatten", Flatten{}}, {"Out", nn::DenseSpec{2, 4}}};
  data.labels.clear();
  for (std::size_t i = 0; i < 8; ++i) data.boxes.push_back(BoxF{1, 1, 1, 1});
  data.images[4] = std::numeric_limits<float>::infinity();
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.augment = false;
  cfg.validation_fraction = 0.0;
  try {
    train(spec, data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}
