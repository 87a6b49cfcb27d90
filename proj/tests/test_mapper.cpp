#include <doctest.h>

#include <random>

#include "shapex/coopt.hpp"
#include "shapex/error.hpp"
#include "shapex/mapper.hpp"
#include "support.hpp"

using namespace shapex;
using shapex::test::TinyWorld;

namespace {

// z = A c + b with a single identity layer.
Clip2ShapeMapper linear_mapper(const Eigen::MatrixXf& A, const Eigen::VectorXf& b) {
  nn::Network net({{"lin", static_cast<int>(A.cols()), static_cast<int>(A.rows()), nn::Activation::identity}});
  net.mutable_layer(0).weight = A;
  net.mutable_layer(0).bias = b;
  net.freeze();
  return Clip2ShapeMapper{Model(std::move(net))};
}

double loss_at(const Clip2ShapeMapper& F, const Eigen::VectorXd& c, const Eigen::VectorXd& z) {
  return (map_code(F, ClipCode{c}).values - z).squaredNorm();
}

}  // namespace

TEST_CASE("mapper has eight layers with residual hidden blocks") {
  const auto specs = mapper_layers(32, 32, MapperConfig{});
  REQUIRE(specs.size() == 8);
  CHECK_FALSE(specs.front().skip);
  CHECK_FALSE(specs.back().skip);
  for (std::size_t i = 1; i + 1 < specs.size(); ++i) CHECK(specs[i].skip);
  CHECK(specs.back().activation == nn::Activation::identity);
  MapperConfig bad;
  bad.layers = 1;
  CHECK_THROWS_AS(mapper_layers(32, 32, bad), ConfigError);
  CHECK(TinyWorld::get().mapper.net.weights().layer_count() == 8);
}

TEST_CASE("mapped codes are deterministic and dimension-checked") {
  const auto& w = TinyWorld::get();
  const auto c = encode_image(w.embedding, w.sketches[3]);
  CHECK(map_code(w.mapper, c).values == map_code(w.mapper, c).values);
  CHECK(map_code(w.mapper, c).dim() == w.space.code_dim());
  CHECK_THROWS_AS(map_code(w.mapper, ClipCode{Eigen::VectorXd::Zero(5)}), ArgumentError);
}

TEST_CASE("mapper training needs frozen spaces and aligned pairs") {
  const auto& w = TinyWorld::get();
  JointEmbedding loose = w.embedding;
  loose.image_encoder = Model(nn::Network::initialized(w.embedding.image_encoder.weights().specs(), 1));
  CHECK_THROWS_AS(train_mapper(w.sketches, w.grids, loose, w.space, MapperConfig{}), StateError);
  std::vector<VoxelGrid> fewer(w.grids.begin(), w.grids.end() - 1);
  CHECK_THROWS_AS(train_mapper(w.sketches, fewer, w.embedding, w.space, MapperConfig{}), ArgumentError);
  CHECK_THROWS_AS(train_mapper(Eigen::MatrixXd(4, 3), Eigen::MatrixXd(4, 2), MapperConfig{}), ArgumentError);
}

TEST_CASE("mapper training leaves the spaces untouched and is repeatable") {
  const auto& w = TinyWorld::get();
  const auto before = w.space.encoder.hash() + w.space.decoder.hash() + w.embedding.image_encoder.hash() +
                      w.embedding.text_encoder.hash();
  MapperConfig mc;
  mc.hidden = 16;
  mc.epochs = 3;
  mc.batch = 16;
  const auto again = train_mapper(w.sketches, w.grids, w.embedding, w.space, mc);
  CHECK(again.net.frozen());
  CHECK(again.net.hash() == w.mapper.net.hash());
  CHECK(before == w.space.encoder.hash() + w.space.decoder.hash() + w.embedding.image_encoder.hash() +
                      w.embedding.text_encoder.hash());
}

TEST_CASE("mapper fits a smooth synthetic map") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const int m = 6, n = 4, N = 512;
  Eigen::MatrixXd A(n, m);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
  Eigen::MatrixXd C(m, N);
  for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = n01(rng);
  const Eigen::MatrixXd Z = A * C;
  MapperConfig mc;
  mc.hidden = 32;
  mc.epochs = 60;
  mc.lr = 1e-3;
  LossLog log;
  const auto F = train_mapper(C, Z, mc, &log);
  REQUIRE(log.size() == 60);
  CHECK(log.back().second < 0.1 * log.front().second);

  int closer = 0;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd c(m);
    for (auto& v : c) v = n01(rng);
    const Eigen::VectorXd z = A * c;
    closer += loss_at(F, c, z) < (map_code(F, ClipCode{Eigen::VectorXd::Zero(m)}).values - z).squaredNorm();
  }
  CHECK(closer >= 90);
}

TEST_CASE("gradient of the coupling loss matches finite differences") {
  const auto& w = TinyWorld::get();
  const auto& net = w.mapper.net.inference();
  for (std::size_t k = 0; k < 10; ++k) {
    const Eigen::VectorXd c = encode_image(w.embedding, w.sketches[k]).values;
    const Eigen::VectorXd z = encode_shape(w.space, w.grids[k]).values;
    const auto tape = net.forward(c);
    const Eigen::VectorXd g = net.backward(tape, nn::Matrix<double>(2.0 * (tape.output.col(0) - z))).input.col(0);
    Eigen::VectorXd fd(c.size());
    const double h = 1e-4;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      Eigen::VectorXd cp = c, cm = c;
      cp[i] += h;
      cm[i] -= h;
      fd[i] = (loss_at(w.mapper, cp, z) - loss_at(w.mapper, cm, z)) / (2 * h);
    }
    CHECK((g - fd).norm() / std::max(1e-12, fd.norm()) < 1e-4);
  }
}

TEST_CASE("co-optimization at a fixed point returns the start") {
  const auto& w = TinyWorld::get();
  const ClipCode c = encode_image(w.embedding, w.sketches[0]);
  const ShapeCode z = map_code(w.mapper, c);
  const auto r = co_optimize(w.mapper, c, z);
  CHECK(r.initial_loss == 0.0);
  CHECK(r.final_loss == 0.0);
  CHECK(r.code.values == c.values);
  CHECK_FALSE(r.code.normalized);
  CHECK(r.trace.size() == 1);
}

TEST_CASE("co-optimization returns the best iterate and has no side effects") {
  const auto& w = TinyWorld::get();
  const auto hashes = w.mapper.net.hash() + w.space.encoder.hash() + w.space.decoder.hash();
  for (std::size_t k = 0; k < 6; ++k) {
    const ClipCode c = encode_image(w.embedding, w.sketches[k]);
    const ShapeCode z = encode_shape(w.space, w.grids[k]);
    const Eigen::VectorXd z_copy = z.values;
    CoOptConfig cfg;
    cfg.iterations = 300;
    cfg.lr = 5e-2;
    const auto r = co_optimize(w.mapper, c, z, cfg);
    CHECK(r.final_loss <= r.initial_loss);
    double best = r.trace.front().second;
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      CHECK(r.trace[i].first == static_cast<int>(i));
      best = std::min(best, r.trace[i].second);
    }
    CHECK(r.final_loss == best);
    CHECK(r.trace[static_cast<std::size_t>(r.best_iteration)].second == best);
    CHECK(loss_at(w.mapper, r.code.values, z.values) == doctest::Approx(r.final_loss).epsilon(1e-12));
    CHECK((r.shape.values - map_code(w.mapper, r.code).values).norm() < 1e-12);
    CHECK(z.values == z_copy);
  }
  CHECK(hashes == w.mapper.net.hash() + w.space.encoder.hash() + w.space.decoder.hash());
}

TEST_CASE("co-optimization on a linear map approaches the least-squares code") {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n01;
  Eigen::MatrixXf A(6, 4);
  Eigen::VectorXf b(6);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
  for (auto& v : b) v = n01(rng);
  const auto F = linear_mapper(A, b);
  const Eigen::MatrixXd Ad = A.cast<double>();
  const Eigen::VectorXd bd = b.cast<double>();
  Eigen::VectorXd z(6);
  for (auto& v : z) v = n01(rng);
  const Eigen::VectorXd ls = Ad.colPivHouseholderQr().solve(z - bd);
  const double floor = (Ad * ls + bd - z).squaredNorm();

  CoOptConfig cfg;
  cfg.iterations = 4000;
  cfg.lr = 1e-2;
  const auto r = co_optimize(F, ClipCode{Eigen::VectorXd::Zero(4)}, ShapeCode{z}, cfg);
  CHECK(r.final_loss == doctest::Approx(floor).epsilon(1e-6).scale(1.0));
  CHECK((r.code.values - ls).norm() < 1e-3);
}

TEST_CASE("co-optimization argument contracts") {
  const auto& w = TinyWorld::get();
  const ClipCode c = encode_image(w.embedding, w.sketches[0]);
  const ShapeCode z = encode_shape(w.space, w.grids[0]);
  CoOptConfig zero;
  zero.iterations = 0;
  const auto r = co_optimize(w.mapper, c, z, zero);
  CHECK(r.trace.size() == 1);
  CHECK(r.final_loss == r.initial_loss);
  CHECK_THROWS_AS(co_optimize(w.mapper, ClipCode{Eigen::VectorXd::Zero(3)}, z), ArgumentError);
  CHECK_THROWS_AS(co_optimize(w.mapper, c, ShapeCode{Eigen::VectorXd::Zero(3)}), ArgumentError);
  CoOptConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(co_optimize(w.mapper, c, z, bad), ConfigError);
  Clip2ShapeMapper loose{Model(nn::Network::initialized(w.mapper.net.weights().specs(), 4))};
  CHECK_THROWS_AS(co_optimize(loose, c, z), StateError);
  ShapeCode nan = z;
  nan.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(co_optimize(w.mapper, c, nan), NumericError);
}

TEST_CASE("loss trace text has one line per iteration") {
  const std::vector<std::pair<int, double>> trace{{0, 2.5}, {1, 1.25}};
  CHECK(format_loss_trace(trace) == "0 2.5\n1 1.25\n");
}
