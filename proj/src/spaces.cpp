#include "shapex/spaces.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "shapex/io.hpp"

namespace shapex {

namespace {

std::uint64_t io_seed(std::uint64_t seed, int stream) { return io::splitmix64(seed * 16 + static_cast<std::uint64_t>(stream)); }

using MatrixF = nn::Matrix<float>;
using VectorF = nn::Vector<float>;

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

MatrixF gather(const MatrixF& data, std::span<const std::size_t> cols) {
  MatrixF out(data.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = data.col(static_cast<Eigen::Index>(cols[i]));
  return out;
}

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch), epoch);
}

// Column-wise L2 normalization and its backward pass.
MatrixF normalize_columns(const MatrixF& x, VectorF& norms) {
  norms = x.colwise().norm().transpose();
  MatrixF out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) /= std::max(norms[c], 1e-12f);
  return out;
}

MatrixF normalize_backward(const MatrixF& unit, const VectorF& norms, const MatrixF& d_unit) {
  MatrixF d = d_unit;
  for (Eigen::Index c = 0; c < unit.cols(); ++c) {
    const float dot = unit.col(c).dot(d_unit.col(c));
    d.col(c) = (d_unit.col(c) - dot * unit.col(c)) / std::max(norms[c], 1e-12f);
  }
  return d;
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("encoder produced a zero or non-finite code");
  return v / n;
}

MatrixF voxel_matrix(std::span<const VoxelGrid> grids) {
  const auto dim = static_cast<Eigen::Index>(grids.front().size());
  MatrixF m(dim, static_cast<Eigen::Index>(grids.size()));
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (static_cast<Eigen::Index>(grids[i].size()) != dim) throw ArgumentError("voxel grids differ in resolution");
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const VectorF>(grids[i].values().data(), dim);
  }
  return m;
}

MatrixF sketch_matrix(std::span<const SketchImage> sketches) {
  const auto dim = static_cast<Eigen::Index>(sketches.front().pixels().size());
  MatrixF m(dim, static_cast<Eigen::Index>(sketches.size()));
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    if (static_cast<Eigen::Index>(sketches[i].pixels().size()) != dim) throw ArgumentError("sketches differ in width");
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const VectorF>(sketches[i].pixels().data(), dim);
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------- vocabulary

Vocabulary Vocabulary::standard() {
  return Vocabulary({"a",       "an",        "the",     "plain",   "simple",     "chair",  "chairs", "table",
                     "tables",  "with",      "without", "and",     "or",         "armrest", "armrests", "stretcher",
                     "stretchers", "drawer", "drawers", "shelf",   "shelves",    "tall",   "short",  "high",
                     "low",     "back",      "backrest", "slatted", "solid",     "open",   "legs",   "leg",
                     "seat",    "top",       "four",    "wooden",  "small",      "large",  "round",  "square"});
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ArgumentError("duplicate vocabulary token: " + tokens_[i]);
  }
}

int Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DataError("unknown token '" + std::string(token) + "'");
  return it->second;
}

std::vector<std::string> Vocabulary::tokenize(std::string_view caption) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      index_of(cur);
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char ch : caption) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc) || ch == ',' || ch == '.') {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  flush();
  if (out.empty()) throw DataError("empty caption");
  return out;
}

Eigen::VectorXf Vocabulary::bag_of_tokens(std::string_view caption) const {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(size()));
  for (const auto& t : tokenize(caption)) v[index_of(t)] += 1.0f;
  return v;
}

// --------------------------------------------------------------- autoencoder

ShapeSpace train_shape_autoencoder(std::span<const VoxelGrid> grids, const AutoencoderConfig& config, LossLog* log,
                                   const ProgressFn& progress) {
  if (grids.size() < config.min_examples)
    throw ConfigError("autoencoder needs at least " + std::to_string(config.min_examples) + " grids, got " +
                      std::to_string(grids.size()));
  if (config.batch <= 0 || config.epochs < 0) throw ConfigError("autoencoder batch/epochs must be positive");
  nn::FlushDenormals ftz;
  const MatrixF data = voxel_matrix(grids);
  const int dim = static_cast<int>(data.rows());
  const int h = config.hidden;
  using nn::Activation;

  nn::Network enc = nn::Network::initialized({{"enc0", dim, h, Activation::leaky_relu},
                                              {"enc1", h, h, Activation::leaky_relu},
                                              {"enc2", h, config.code_dim, Activation::identity}},
                                             io_seed(config.seed, 1));
  nn::Network dec = nn::Network::initialized({{"dec0", config.code_dim, h, Activation::leaky_relu},
                                              {"dec1", h, h, Activation::leaky_relu},
                                              {"dec2", h, dim, Activation::sigmoid}},
                                             io_seed(config.seed, 2));
  nn::AdamConfig adam{.lr = config.lr};
  nn::NetworkOptimizer<float> enc_opt(enc, adam), dec_opt(dec, adam);
  std::mt19937_64 rng(io_seed(config.seed, 3));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(grids.size(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      const MatrixF x = gather(data, std::span(order).subspan(start, end - start));
      const auto enc_tape = enc.forward(x);
      const auto dec_tape = dec.forward(enc_tape.output);
      const MatrixF& p = dec_tape.output;
      const auto count = static_cast<float>(p.size());
      const double loss = -(x.array() * (p.array().max(1e-7f)).log() +
                            (1.0f - x.array()) * ((1.0f - p.array()).max(1e-7f)).log())
                               .cast<double>()
                               .sum() /
                          count;
      check_finite(loss, epoch);
      // Mean BCE over voxels; its gradient w.r.t. the logits is (p - t) / count.
      const MatrixF d_logits = (p - x) / count;
      const auto dec_grad = dec.backward_preactivation(dec_tape, d_logits);
      const auto enc_grad = enc.backward(enc_tape, dec_grad.input);
      dec_opt.step(dec, dec_grad);
      enc_opt.step(enc, enc_grad);
      total += loss * static_cast<double>(end - start);
      seen += end - start;
    }
    const double mean = total / static_cast<double>(seen);
    if (log) log->emplace_back(epoch, mean);
    if (progress) progress(epoch, mean);
  }

  ShapeSpace space;
  space.encoder = Model(std::move(enc));
  space.decoder = Model(std::move(dec));
  space.encoder.freeze();
  space.decoder.freeze();
  space.resolution = grids.front().resolution();
  return space;
}

ShapeCode encode_shape(const ShapeSpace& space, const VoxelGrid& grid) {
  const auto& net = space.encoder.inference();
  if (static_cast<int>(grid.size()) != net.input_dim()) throw ArgumentError("grid does not match shape encoder input");
  Eigen::VectorXd x(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) x[static_cast<Eigen::Index>(i)] = grid.values()[i];
  return ShapeCode{net.infer(x)};
}

VoxelGrid decode_shape(const ShapeSpace& space, const ShapeCode& code) {
  const auto& net = space.decoder.inference();
  if (code.dim() != net.input_dim()) throw ArgumentError("shape code dimension does not match decoder");
  const Eigen::VectorXd p = net.infer(code.values);
  std::vector<float> values(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<float>(p[i]);
  return VoxelGrid(space.resolution, std::move(values));
}

Eigen::MatrixXd encode_shapes(const ShapeSpace& space, std::span<const VoxelGrid> grids) {
  Eigen::MatrixXd out(space.code_dim(), static_cast<Eigen::Index>(grids.size()));
  if (grids.empty()) return out;
  const auto& net = space.encoder.inference();
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < grids.size(); s += kChunk) {
    const std::size_t e = std::min(grids.size(), s + kChunk);
    const Eigen::MatrixXd x = voxel_matrix(grids.subspan(s, e - s)).cast<double>();
    if (x.rows() != net.input_dim()) throw ArgumentError("grid does not match shape encoder input");
    out.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) = net.infer(x);
  }
  return out;
}

// ------------------------------------------------------------ joint embedding

JointEmbedding train_joint_embedding(std::span<const SketchImage> sketches, std::span<const std::string> captions,
                                     const EmbeddingConfig& config, LossLog* log, const ProgressFn& progress) {
  if (sketches.size() != captions.size()) throw ArgumentError("sketch and caption counts differ");
  if (sketches.size() < config.min_examples)
    throw ConfigError("joint embedding needs at least " + std::to_string(config.min_examples) + " pairs, got " +
                      std::to_string(sketches.size()));
  if (config.batch < 2 || config.epochs < 0) throw ConfigError("embedding batch must be >= 2");

  nn::FlushDenormals ftz;
  JointEmbedding result;
  const Vocabulary& vocab = result.vocabulary;
  const MatrixF images = sketch_matrix(sketches);
  MatrixF texts(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(captions.size()));
  // Caption identity, so duplicate captions in a batch share the target mass.
  std::vector<int> caption_id(captions.size());
  std::map<std::string, int, std::less<>> ids;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    texts.col(static_cast<Eigen::Index>(i)) = vocab.bag_of_tokens(captions[i]);
    caption_id[i] = ids.emplace(captions[i], static_cast<int>(ids.size())).first->second;
  }

  using nn::Activation;
  const int img_dim = static_cast<int>(images.rows());
  const int hi = config.image_hidden;
  nn::Network img = nn::Network::initialized({{"img0", img_dim, hi, Activation::leaky_relu},
                                              {"img1", hi, hi, Activation::leaky_relu},
                                              {"img2", hi, config.clip_dim, Activation::identity}},
                                             io_seed(config.seed, 1));
  nn::Network txt = nn::Network::initialized(
      {{"tok_embed", static_cast<int>(vocab.size()), config.text_embed, Activation::identity},
       {"txt0", config.text_embed, config.text_hidden, Activation::leaky_relu},
       {"txt1", config.text_hidden, config.clip_dim, Activation::identity}},
      io_seed(config.seed, 2));
  nn::AdamConfig adam{.lr = config.lr};
  nn::NetworkOptimizer<float> img_opt(img, adam), txt_opt(txt, adam);
  std::mt19937_64 rng(io_seed(config.seed, 3));
  const float inv_t = static_cast<float>(1.0 / config.temperature);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(sketches.size(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      const auto cols = std::span(order).subspan(start, end - start);
      const auto B = static_cast<Eigen::Index>(cols.size());
      if (B < 2) break;
      const auto img_tape = img.forward(gather(images, cols));
      const auto txt_tape = txt.forward(gather(texts, cols));
      VectorF img_norm, txt_norm;
      const MatrixF u = normalize_columns(img_tape.output, img_norm);
      const MatrixF v = normalize_columns(txt_tape.output, txt_norm);
      const MatrixF logits = (u.transpose() * v) * inv_t;  // rows: images, cols: texts

      MatrixF target = MatrixF::Zero(B, B);
      for (Eigen::Index i = 0; i < B; ++i) {
        float count = 0.0f;
        for (Eigen::Index j = 0; j < B; ++j)
          if (caption_id[cols[static_cast<std::size_t>(i)]] == caption_id[cols[static_cast<std::size_t>(j)]]) {
            target(i, j) = 1.0f;
            count += 1.0f;
          }
        target.row(i) /= count;
      }

      // Symmetric cross-entropy: image->text over rows, text->image over columns.
      MatrixF p_row(B, B), p_col(B, B);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < B; ++i) {
        const float mx = logits.row(i).maxCoeff();
        const auto e = (logits.row(i).array() - mx).exp();
        const float z = e.sum();
        p_row.row(i) = e / z;
        loss -= (target.row(i).array() * (logits.row(i).array() - mx - std::log(z))).sum();
      }
      for (Eigen::Index j = 0; j < B; ++j) {
        const float mx = logits.col(j).maxCoeff();
        const auto e = (logits.col(j).array() - mx).exp();
        const float z = e.sum();
        p_col.col(j) = e / z;
        // The target matrix is symmetric, so its columns are the column targets.
        loss -= (target.col(j).array() * (logits.col(j).array() - mx - std::log(z))).sum();
      }
      loss /= 2.0 * static_cast<double>(B);
      check_finite(loss, epoch);

      const MatrixF d_logits = ((p_row - target) + (p_col - target)) / (2.0f * static_cast<float>(B));
      const MatrixF d_u = (v * d_logits.transpose()) * inv_t;
      const MatrixF d_v = (u * d_logits) * inv_t;
      const auto img_grad = img.backward(img_tape, normalize_backward(u, img_norm, d_u));
      const auto txt_grad = txt.backward(txt_tape, normalize_backward(v, txt_norm, d_v));
      img_opt.step(img, img_grad);
      txt_opt.step(txt, txt_grad);
      total += loss;
      ++batches;
    }
    const double mean = batches ? total / static_cast<double>(batches) : 0.0;
    if (log) log->emplace_back(epoch, mean);
    if (progress) progress(epoch, mean);
  }

  result.image_encoder = Model(std::move(img));
  result.text_encoder = Model(std::move(txt));
  result.image_encoder.freeze();
  result.text_encoder.freeze();
  result.sketch_width = sketches.front().width();
  return result;
}

ClipCode encode_image(const JointEmbedding& embedding, const SketchImage& sketch) {
  const auto& net = embedding.image_encoder.inference();
  if (static_cast<int>(sketch.pixels().size()) != net.input_dim())
    throw ArgumentError("sketch width " + std::to_string(sketch.width()) + " does not match the image encoder");
  Eigen::VectorXd x(static_cast<Eigen::Index>(sketch.pixels().size()));
  for (std::size_t i = 0; i < sketch.pixels().size(); ++i) x[static_cast<Eigen::Index>(i)] = sketch.pixels()[i];
  return ClipCode{normalized(net.infer(x)), true};
}

ClipCode encode_text(const JointEmbedding& embedding, std::string_view caption) {
  const auto& net = embedding.text_encoder.inference();
  const Eigen::VectorXd x = embedding.vocabulary.bag_of_tokens(caption).cast<double>();
  return ClipCode{normalized(net.infer(x)), true};
}

Eigen::MatrixXd encode_images(const JointEmbedding& embedding, std::span<const SketchImage> sketches) {
  Eigen::MatrixXd out(embedding.clip_dim(), static_cast<Eigen::Index>(sketches.size()));
  if (sketches.empty()) return out;
  const auto& net = embedding.image_encoder.inference();
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < sketches.size(); s += kChunk) {
    const std::size_t e = std::min(sketches.size(), s + kChunk);
    const Eigen::MatrixXd x = sketch_matrix(sketches.subspan(s, e - s)).cast<double>();
    if (x.rows() != net.input_dim()) throw ArgumentError("sketch does not match the image encoder");
    Eigen::MatrixXd y = net.infer(x);
    for (Eigen::Index c = 0; c < y.cols(); ++c) y.col(c) = normalized(y.col(c));
    out.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) = y;
  }
  return out;
}

}  // namespace shapex
