#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fd_oracle.hpp"
#include "macrotex/features.hpp"
#include "macrotex/random.hpp"
#include "macrotex/weights_io.hpp"

using namespace macrotex;

namespace {

Image row_image(std::initializer_list<double> values) {
  Image x(1, static_cast<int>(values.size()), 1);
  int i = 0;
  for (double v : values) x.at(0, i++) = v;
  return x;
}

ConvNetSpec tiny_convnet(int in_channels, RandomStream& stream) {
  ConvNetSpec net;
  for (int j = 0; j < 2; ++j) {
    ConvLayer layer;
    layer.in_channels = j == 0 ? in_channels : 4;
    layer.out_channels = j == 0 ? 4 : 3;
    layer.kh = layer.kw = 3;
    layer.stride = j == 0 ? 1 : 2;
    layer.pad = PaddingMode::Periodic;
    layer.phi = nonlinearity("softplus");
    layer.weights.resize(layer.weight_count());
    for (double& w : layer.weights) w = 0.4 * stream.normal();
    layer.bias.resize(layer.out_channels);
    for (double& b : layer.bias) b = 0.1 * stream.normal();
    net.layers.push_back(std::move(layer));
  }
  net.selected_layers = {1, 2};
  return net;
}

}  // namespace

TEST_CASE("eval_features: first-order arithmetic mean") {
  FirstOrderSpec spec{{nonlinearity("identity")}};
  CHECK(eval_features(spec, row_image({1, 2, 3}))[0] == doctest::Approx(2.0));
}

TEST_CASE("eval_features: 1x1 softplus convnet closed form") {
  ConvNetSpec net;
  ConvLayer layer;
  layer.in_channels = layer.out_channels = 1;
  layer.kh = layer.kw = 1;
  layer.phi = nonlinearity("softplus");
  layer.weights = {1.0};
  layer.bias = {0.0};
  net.layers.push_back(layer);
  net.selected_layers = {1};
  Image x(1, 1, 1);
  CHECK(eval_features(FeatureMapSpec{net}, x)[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("eval_features: identity filter with square nonlinearity") {
  FilterBankSpec spec;
  spec.kernels.push_back(Kernel{1, 1, {1.0}});
  spec.phi = nonlinearity("square");
  CHECK(eval_features(FeatureMapSpec{spec}, row_image({1, -1, 2}))[0] ==
        doctest::Approx(2.0));
}

TEST_CASE("eval_weighted_gradient: zero theta and mean gradient") {
  FirstOrderSpec spec{{nonlinearity("identity")}};
  Image x = row_image({0.3, -0.4, 2.0, 1.0});
  Image zero = eval_weighted_gradient(spec, x, {0.0});
  for (double v : zero.data) CHECK(v == 0.0);

  Image g = eval_weighted_gradient(spec, x, {1.0});
  for (double v : g.data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("eval_weighted_gradient: matches finite differences on random specs") {
  RandomStream rs(2024);
  for (int trial = 0; trial < 8; ++trial) {
    Image x = white_noise_image(6, 6, 1, 0.0, 1.0, rs);
    FilterBankSpec spec;
    for (int k = 0; k < 3; ++k) {
      Kernel kernel{3, 3, {}};
      kernel.taps.resize(9);
      for (double& t : kernel.taps) t = 0.5 * rs.normal();
      spec.kernels.push_back(std::move(kernel));
    }
    spec.phi = nonlinearity(trial % 2 == 0 ? "softplus" : "tanh");
    spec.pad = trial % 3 == 0 ? PaddingMode::Zero : PaddingMode::Periodic;
    std::vector<double> theta(3);
    for (double& t : theta) t = rs.normal();

    Image adj = eval_weighted_gradient(FeatureMapSpec{spec}, x, theta);
    Image fd = testing::fd_weighted_gradient(FeatureMapSpec{spec}, x, theta);
    CHECK(testing::relative_gradient_error(adj, fd) < 1e-4);
  }
}

TEST_CASE("eval_weighted_gradient: 2-layer strided convnet vs finite differences") {
  RandomStream rs(77);
  ConvNetSpec net = tiny_convnet(1, rs);
  Image x = white_noise_image(8, 8, 1, 0.0, 1.0, rs);
  std::vector<double> theta{rs.normal(), rs.normal()};
  Image adj = eval_weighted_gradient(FeatureMapSpec{net}, x, theta);
  Image fd = testing::fd_weighted_gradient(FeatureMapSpec{net}, x, theta);
  CHECK(testing::relative_gradient_error(adj, fd) < 1e-4);
}

TEST_CASE("eval_weighted_gradient: linear in theta") {
  RandomStream rs(31);
  ConvNetSpec net = tiny_convnet(1, rs);
  Image x = white_noise_image(6, 6, 1, 0.0, 1.0, rs);
  std::vector<double> t1{rs.normal(), rs.normal()};
  std::vector<double> t2{rs.normal(), rs.normal()};
  const double a = 1.7, b = -0.3;
  std::vector<double> mix{a * t1[0] + b * t2[0], a * t1[1] + b * t2[1]};
  Image g1 = eval_weighted_gradient(FeatureMapSpec{net}, x, t1);
  Image g2 = eval_weighted_gradient(FeatureMapSpec{net}, x, t2);
  Image gm = eval_weighted_gradient(FeatureMapSpec{net}, x, mix);
  for (std::size_t i = 0; i < gm.data.size(); ++i)
    CHECK(gm.data[i] ==
          doctest::Approx(a * g1.data[i] + b * g2.data[i]).epsilon(1e-12));
}

TEST_CASE("translation invariance of periodic filter-bank statistics") {
  RandomStream rs(5);
  Image x = white_noise_image(8, 8, 1, 0.0, 1.0, rs);
  FilterBankSpec spec;
  Kernel k{3, 3, {}};
  k.taps.resize(9);
  for (double& t : k.taps) t = rs.normal();
  spec.kernels.push_back(k);
  spec.phi = nonlinearity("softplus");
  spec.pad = PaddingMode::Periodic;

  Image shifted(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx)
      shifted.at((y + 3) % 8, (xx + 5) % 8) = x.at(y, xx);
  const double f0 = eval_features(FeatureMapSpec{spec}, x)[0];
  const double f1 = eval_features(FeatureMapSpec{spec}, shifted)[0];
  CHECK(f0 == doctest::Approx(f1).epsilon(1e-13));
}

TEST_CASE("sub-linearity audit of registered nonlinearities") {
  for (const char* name : {"identity", "softplus", "relu", "tanh", "abs", "one"})
    CHECK(audit_sublinear(nonlinearity(name)));
  CHECK_FALSE(audit_sublinear(nonlinearity("square")));
}

TEST_CASE("jacobian_rank") {
  Image x0 = row_image({0.1, 0.7, -0.2});

  SUBCASE("identity transform has rank 1") {
    FirstOrderSpec spec{{nonlinearity("identity")}};
    auto r = jacobian_rank(spec, x0);
    CHECK(r.rank == 1);
    CHECK(r.full_row_rank);
  }
  SUBCASE("constant transform has rank 0") {
    FirstOrderSpec spec{{nonlinearity("one")}};
    auto r = jacobian_rank(spec, x0);
    CHECK(r.rank == 0);
    CHECK_FALSE(r.full_row_rank);
  }
  SUBCASE("duplicated identity rows are rank deficient") {
    FirstOrderSpec spec{{nonlinearity("identity"), nonlinearity("identity")}};
    auto r = jacobian_rank(spec, x0);
    CHECK(r.rank == 1);
    CHECK_FALSE(r.full_row_rank);
  }
  SUBCASE("p > d is rejected") {
    Image tiny(1, 1, 1);
    FirstOrderSpec spec{{nonlinearity("identity"), nonlinearity("square")}};
    CHECK_THROWS_AS(jacobian_rank(spec, tiny), std::invalid_argument);
  }
}

TEST_CASE("weights manifest round trip is bitwise identical") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "macrotex_weights_test";
  fs::create_directories(dir);
  RandomStream rs(8);
  ConvNetSpec net = tiny_convnet(3, rs);
  net.input_offset = {0.485, 0.456, 0.406};

  const std::string manifest = (dir / "net.weights").string();
  save_weights(net, manifest, "net.bin");
  ConvNetSpec back = load_weights(manifest);

  REQUIRE(back.layers.size() == net.layers.size());
  CHECK(back.input_offset == net.input_offset);
  for (std::size_t j = 0; j < net.layers.size(); ++j) {
    // storage is float32, so compare against the float-rounded original
    REQUIRE(back.layers[j].weights.size() == net.layers[j].weights.size());
    for (std::size_t i = 0; i < net.layers[j].weights.size(); ++i)
      CHECK(back.layers[j].weights[i] ==
            static_cast<double>(static_cast<float>(net.layers[j].weights[i])));
    CHECK(back.layers[j].phi.name == net.layers[j].phi.name);
    CHECK(back.layers[j].stride == net.layers[j].stride);
  }

  // save->load->save is exactly stable
  const std::string manifest2 = (dir / "net2.weights").string();
  save_weights(back, manifest2, "net2.bin");
  ConvNetSpec again = load_weights(manifest2);
  for (std::size_t j = 0; j < back.layers.size(); ++j)
    CHECK(again.layers[j].weights == back.layers[j].weights);
}

TEST_CASE("weights manifest error cases name the offending layer") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "macrotex_weights_err";
  fs::create_directories(dir);
  {
    std::ofstream blob(dir / "w.bin", std::ios::binary);
    std::vector<char> bytes(8, 0);  // deliberately short
    blob.write(bytes.data(), bytes.size());
  }
  auto write_manifest = [&](const std::string& layer_line) {
    std::ofstream man(dir / "w.weights");
    man << "macrotex-weights 1\nblob w.bin\n" << layer_line << "\n";
  };

  SUBCASE("unknown phi") {
    write_manifest("layer 1 1 1 1 1 periodic gelu 0 8");
    CHECK_THROWS_WITH_AS(load_weights((dir / "w.weights").string()),
                         doctest::Contains("layer 1"), format_error);
  }
  SUBCASE("length mismatch") {
    write_manifest("layer 1 1 1 1 1 periodic softplus 0 12");
    CHECK_THROWS_WITH_AS(load_weights((dir / "w.weights").string()),
                         doctest::Contains("length"), format_error);
  }
  SUBCASE("truncated blob") {
    write_manifest("layer 2 2 1 1 1 periodic softplus 0 20");
    CHECK_THROWS_WITH_AS(load_weights((dir / "w.weights").string()),
                         doctest::Contains("truncated"), format_error);
  }
}

TEST_CASE("randomize_weights") {
  SUBCASE("zero template stays zero") {
    ConvNetSpec net;
    ConvLayer layer;
    layer.in_channels = layer.out_channels = 2;
    layer.kh = layer.kw = 3;
    layer.phi = nonlinearity("softplus");
    layer.weights.assign(layer.weight_count(), 0.0);
    layer.bias.assign(2, 0.0);
    net.layers.push_back(layer);
    RandomStream rs(1);
    ConvNetSpec rand = randomize_weights(net, rs);
    for (double w : rand.layers[0].weights) CHECK(w == 0.0);
  }

  SUBCASE("empirical moments track the template") {
    // 3x3 kernels, 64 in, 64 out; template has exact per-channel mean m, std s
    const double m = 0.1, s = 0.2;
    ConvNetSpec net;
    ConvLayer layer;
    layer.in_channels = layer.out_channels = 64;
    layer.kh = layer.kw = 3;
    layer.phi = nonlinearity("softplus");
    layer.weights.resize(layer.weight_count());
    for (std::size_t i = 0; i < layer.weights.size(); ++i)
      layer.weights[i] = m + (i % 2 == 0 ? s : -s);
    layer.bias.assign(64, 0.0);
    net.layers.push_back(layer);

    RandomStream rs(9);
    ConvNetSpec rand = randomize_weights(net, rs);
    const auto& w = rand.layers[0].weights;
    const double n = static_cast<double>(w.size());
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= n;
    CHECK(std::fabs(mean - m) < 3.0 * s / std::sqrt(n));
    CHECK(std::fabs(std::sqrt(var) - s) < 0.02 * s);
  }
}
