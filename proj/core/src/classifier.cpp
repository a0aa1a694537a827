#include "dcvae/classifier.hpp"

#include <algorithm>

#include "dcvae/checkpoint.hpp"

namespace dcvae {

ConvClassifier::ConvClassifier(int n_classes, std::uint64_t init_seed)
    : n_classes_(n_classes) {
  if (n_classes < 2) throw ConfigError("classifier needs >= 2 classes");
  RngState rng(init_seed);
  int cin = 3;
  for (int cout : {16, 32, kFeatureDim}) {
    ws_.push_back(Var::param(randn({3, 3, cin, cout}, 0.02f, rng)));
    bs_.push_back(Var::param(Tensor({cout})));
    cin = cout;
  }
  head_w_ = Var::param(randn({kFeatureDim, n_classes}, 0.02f, rng));
  head_b_ = Var::param(Tensor({n_classes}));
}

Var ConvClassifier::penultimate(const Var& images) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[3] != 3)
    throw ShapeError("classifier: expected (N,H,W,3) images, got " +
                     shape_str(s));
  Var h = images;
  for (std::size_t i = 0; i < ws_.size(); ++i)
    h = leaky_relu(conv2d(h, ws_[i], bs_[i], 2, 1));
  return reshape(global_avg_pool(h), {s[0], kFeatureDim});
}

Var ConvClassifier::logits(const Var& images) const {
  return linear(penultimate(images), head_w_, head_b_);
}

std::vector<int> ConvClassifier::predict(const Tensor& images) const {
  NoGradGuard ng;
  std::vector<int> out;
  const int n = images.dim(0);
  const int chunk = 128;
  for (int at = 0; at < n; at += chunk) {
    const int m = std::min(chunk, n - at);
    Tensor batch({m, images.dim(1), images.dim(2), images.dim(3)});
    const std::size_t img = images.numel() / static_cast<std::size_t>(n);
    std::copy_n(images.data() + static_cast<std::size_t>(at) * img, img * m,
                batch.data());
    Var lg = logits(Var::constant(std::move(batch)));
    for (int i = 0; i < m; ++i) {
      const float* row =
          lg.value().data() + static_cast<std::size_t>(i) * n_classes_;
      out.push_back(static_cast<int>(
          std::max_element(row, row + n_classes_) - row));
    }
  }
  return out;
}

Tensor ConvClassifier::features(const Tensor& images) const {
  NoGradGuard ng;
  const int n = images.dim(0);
  Tensor out({n, kFeatureDim});
  const int chunk = 128;
  for (int at = 0; at < n; at += chunk) {
    const int m = std::min(chunk, n - at);
    Tensor batch({m, images.dim(1), images.dim(2), images.dim(3)});
    const std::size_t img = images.numel() / static_cast<std::size_t>(n);
    std::copy_n(images.data() + static_cast<std::size_t>(at) * img, img * m,
                batch.data());
    Var feats = penultimate(Var::constant(std::move(batch)));
    std::copy_n(feats.value().data(),
                static_cast<std::size_t>(m) * kFeatureDim,
                out.data() + static_cast<std::size_t>(at) * kFeatureDim);
  }
  return out;
}

void ConvClassifier::collect(ParamMap& out) const {
  for (std::size_t i = 0; i < ws_.size(); ++i) {
    out["clf.blk" + std::to_string(i) + ".w"] = ws_[i];
    out["clf.blk" + std::to_string(i) + ".b"] = bs_[i];
  }
  out["clf.head_w"] = head_w_;
  out["clf.head_b"] = head_b_;
}

void ConvClassifier::save(const std::string& path) const {
  ParamMap params;
  collect(params);
  TensorMap tensors = params_to_tensors(params);
  tensors["clf.meta.n_classes"] = Tensor::scalar(static_cast<float>(n_classes_));
  save_tensors(path, tensors);
}

ConvClassifier ConvClassifier::load(const std::string& path) {
  TensorMap tensors = load_tensors(path);
  auto it = tensors.find("clf.meta.n_classes");
  if (it == tensors.end()) throw IoError("classifier checkpoint lacks metadata");
  ConvClassifier clf(static_cast<int>(it->second.item()), 0);
  ParamMap params;
  clf.collect(params);
  load_into_params(tensors, params);
  return clf;
}

}  // namespace dcvae
