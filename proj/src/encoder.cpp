#include "chl/encoder.hpp"

#include <cmath>

#include "chl/error.hpp"

namespace chl {

namespace {

// Patch rows are laid out c * 9 + (dy * 3 + dx); columns are b * H * W + y * W + x.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& in, int batch, int height, int width) {
  const int cin = static_cast<int>(in.rows());
  const Eigen::Index hw = static_cast<Eigen::Index>(height) * width;
  Eigen::MatrixXd patches = Eigen::MatrixXd::Zero(9 * cin, in.cols());
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = b * hw;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index col = base + static_cast<Eigen::Index>(y) * width + x;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= height) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= width) continue;
            const Eigen::Index src = base + static_cast<Eigen::Index>(yy) * width + xx;
            const int k = (dy + 1) * 3 + (dx + 1);
            for (int c = 0; c < cin; ++c) patches(c * 9 + k, col) = in(c, src);
          }
        }
      }
  }
  return patches;
}

// Adjoint of im2col: scatter patch gradients back onto the input grid.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& dpatches, int cin, int batch, int height, int width) {
  const Eigen::Index hw = static_cast<Eigen::Index>(height) * width;
  Eigen::MatrixXd din = Eigen::MatrixXd::Zero(cin, dpatches.cols());
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = b * hw;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index col = base + static_cast<Eigen::Index>(y) * width + x;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= height) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= width) continue;
            const Eigen::Index src = base + static_cast<Eigen::Index>(yy) * width + xx;
            const int k = (dy + 1) * 3 + (dx + 1);
            for (int c = 0; c < cin; ++c) din(c, src) += dpatches(c * 9 + k, col);
          }
        }
      }
  }
  return din;
}

Eigen::MatrixXd avg_pool2(const Eigen::MatrixXd& in, int batch, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  const Eigen::Index hw = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;
  Eigen::MatrixXd out(in.rows(), static_cast<Eigen::Index>(batch) * ohw);
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const Eigen::Index dst = b * ohw + static_cast<Eigen::Index>(y) * ow + x;
        const Eigen::Index s00 = b * hw + static_cast<Eigen::Index>(2 * y) * width + 2 * x;
        out.col(dst) = 0.25 * (in.col(s00) + in.col(s00 + 1) + in.col(s00 + width) + in.col(s00 + width + 1));
      }
  return out;
}

Eigen::MatrixXd avg_pool2_backward(const Eigen::MatrixXd& dout, int batch, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  const Eigen::Index hw = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;
  Eigen::MatrixXd din = Eigen::MatrixXd::Zero(dout.rows(), static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const Eigen::Index src = b * ohw + static_cast<Eigen::Index>(y) * ow + x;
        const Eigen::Index d00 = b * hw + static_cast<Eigen::Index>(2 * y) * width + 2 * x;
        const Eigen::VectorXd g = 0.25 * dout.col(src);
        din.col(d00) += g;
        din.col(d00 + 1) += g;
        din.col(d00 + width) += g;
        din.col(d00 + width + 1) += g;
      }
  return din;
}

constexpr double kNormFloor = 1e-12;

}  // namespace

void EncoderConfig::validate() const {
  if (channels.empty()) throw ConfigError("encoder needs at least one conv block");
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  int size = input_size;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k] < 1) throw ConfigError("conv channel counts must be positive");
    if (size < 2 || size % 2 != 0) throw ConfigError("input_size must halve cleanly through every block");
    size /= 2;
  }
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EncoderParams params;
  params.config = cfg;
  RngEngine rng = derive_rng(seed, {0x494e4954ull});  // "INIT"
  int cin = 3;
  for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
    const int cout = cfg.channels[k];
    const double bound = std::sqrt(1.0 / (9.0 * cin));
    Eigen::MatrixXd w(cout, 9 * cin);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = uniform_real(rng, -bound, bound);
    params.tensors.push_back(std::move(w));
    params.tensors.push_back(Eigen::MatrixXd::Zero(cout, 1));
    cin = cout;
  }
  const double bound = std::sqrt(1.0 / cin);
  Eigen::MatrixXd proj(cfg.embed_dim, cin);
  for (Eigen::Index i = 0; i < proj.rows(); ++i)
    for (Eigen::Index j = 0; j < proj.cols(); ++j) proj(i, j) = uniform_real(rng, -bound, bound);
  params.tensors.push_back(std::move(proj));
  params.tensors.push_back(Eigen::MatrixXd::Zero(cfg.embed_dim, 1));
  return params;
}

EncoderParams EncoderParams::from_tensors(const EncoderConfig& cfg, std::vector<Eigen::MatrixXd> tensors) {
  cfg.validate();
  const EncoderParams reference = EncoderParams::init(cfg, 0);
  if (tensors.size() != reference.tensors.size()) throw DataError("encoder tensor count does not match config");
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].rows() != reference.tensors[i].rows() || tensors[i].cols() != reference.tensors[i].cols())
      throw DataError("encoder tensor shape does not match config");
  EncoderParams params;
  params.config = cfg;
  params.tensors = std::move(tensors);
  return params;
}

bool EncoderParams::all_finite() const {
  for (const auto& t : tensors)
    if (!t.allFinite()) return false;
  return true;
}

Eigen::MatrixXd forward_batch(const EncoderParams& params, const std::vector<const ImageTensor*>& images,
                              ForwardTrace* trace) {
  const EncoderConfig& cfg = params.config;
  const int batch = static_cast<int>(images.size());
  if (batch == 0) throw DataError("empty batch");
  const Eigen::Index hw = static_cast<Eigen::Index>(cfg.input_size) * cfg.input_size;
  Eigen::MatrixXd current(3, static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b) {
    const ImageTensor& img = *images[b];
    if (img.height != cfg.input_size || img.width != cfg.input_size)
      throw DataError("image dimensions do not match encoder input size");
    current.middleCols(b * hw, hw) = img.pixels / 255.0;
  }

  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t = ForwardTrace{};
  t.batch = batch;

  int size = cfg.input_size;
  for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
    Eigen::MatrixXd patches = im2col(current, batch, size, size);
    Eigen::MatrixXd act =
        ((params.conv_weight(static_cast<int>(k)) * patches).colwise() + params.conv_bias(static_cast<int>(k)).col(0))
            .array()
            .tanh()
            .matrix();
    current = avg_pool2(act, batch, size, size);
    t.patches.push_back(std::move(patches));
    t.activations.push_back(std::move(act));
    t.pooled.push_back(current);
    size /= 2;
  }

  const Eigen::Index fhw = static_cast<Eigen::Index>(size) * size;
  t.features.resize(current.rows(), batch);
  for (int b = 0; b < batch; ++b) t.features.col(b) = current.middleCols(b * fhw, fhw).rowwise().mean();

  t.pre_norm = (params.proj_weight() * t.features).colwise() + params.proj_bias().col(0);
  t.embeddings.resizeLike(t.pre_norm);
  for (int b = 0; b < batch; ++b) {
    const double norm = std::max(t.pre_norm.col(b).norm(), kNormFloor);
    t.embeddings.col(b) = t.pre_norm.col(b) / norm;
  }
  return t.embeddings.transpose();
}

Eigen::VectorXd forward(const EncoderParams& params, const ImageTensor& image) {
  return forward_batch(params, {&image}, nullptr).row(0).transpose();
}

std::vector<Eigen::MatrixXd> backward_batch(const EncoderParams& params, const ForwardTrace& trace,
                                            const Eigen::MatrixXd& upstream_grad) {
  const EncoderConfig& cfg = params.config;
  const int batch = trace.batch;
  if (upstream_grad.rows() != batch || upstream_grad.cols() != cfg.embed_dim)
    throw DataError("upstream gradient shape mismatch");

  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(params.tensors.size());
  for (const auto& t : params.tensors) grads.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  auto conv_wgrad = [&grads](int k) -> Eigen::MatrixXd& { return grads[2 * k]; };
  auto conv_bgrad = [&grads](int k) -> Eigen::MatrixXd& { return grads[2 * k + 1]; };
  Eigen::MatrixXd& proj_wgrad = grads[grads.size() - 2];
  Eigen::MatrixXd& proj_bgrad = grads[grads.size() - 1];

  // normalization: d(v/|v|) pushes the upstream through (I - zz^T)/|v|
  Eigen::MatrixXd dpre(cfg.embed_dim, batch);
  for (int b = 0; b < batch; ++b) {
    const Eigen::VectorXd g = upstream_grad.row(b).transpose();
    const Eigen::VectorXd z = trace.embeddings.col(b);
    const double norm = std::max(trace.pre_norm.col(b).norm(), kNormFloor);
    dpre.col(b) = (g - z * z.dot(g)) / norm;
  }

  proj_wgrad = dpre * trace.features.transpose();
  proj_bgrad = dpre.rowwise().sum();
  Eigen::MatrixXd dfeatures = params.proj_weight().transpose() * dpre;

  int size = cfg.input_size;
  for (std::size_t k = 0; k < cfg.channels.size(); ++k) size /= 2;
  const Eigen::Index fhw = static_cast<Eigen::Index>(size) * size;

  // global average pooling backward
  Eigen::MatrixXd dcurrent(dfeatures.rows(), static_cast<Eigen::Index>(batch) * fhw);
  for (int b = 0; b < batch; ++b)
    dcurrent.middleCols(b * fhw, fhw) = (dfeatures.col(b) / static_cast<double>(fhw)).replicate(1, fhw);

  for (int k = static_cast<int>(cfg.channels.size()) - 1; k >= 0; --k) {
    const int in_size = size * 2;  // spatial size before this block's pool
    Eigen::MatrixXd dact = avg_pool2_backward(dcurrent, batch, in_size, in_size);
    dact.array() *= (1.0 - trace.activations[k].array().square());
    conv_wgrad(k) = dact * trace.patches[k].transpose();
    conv_bgrad(k) = dact.rowwise().sum();
    if (k > 0) {
      const Eigen::MatrixXd dpatches = params.conv_weight(k).transpose() * dact;
      const int cin = static_cast<int>(params.conv_weight(k).cols()) / 9;
      dcurrent = col2im(dpatches, cin, batch, in_size, in_size);
    }
    size = in_size;
  }
  return grads;
}

std::vector<Eigen::MatrixXd> backward(const EncoderParams& params, const ImageTensor& image,
                                      const Eigen::VectorXd& upstream_grad) {
  ForwardTrace trace;
  forward_batch(params, {&image}, &trace);
  return backward_batch(params, trace, upstream_grad.transpose());
}

void TrainConfig::validate() const {
  // zero is allowed: a no-op optimizer is a useful determinism probe
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must be in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
}

AdamState::AdamState(const std::vector<Eigen::MatrixXd>& params) {
  for (const auto& p : params) {
    m.push_back(Eigen::ArrayXXd::Zero(p.rows(), p.cols()));
    v.push_back(Eigen::ArrayXXd::Zero(p.rows(), p.cols()));
  }
}

void AdamState::update(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
                       const TrainConfig& cfg) {
  if (params.size() != m.size() || grads.size() != m.size()) throw DataError("adam state does not match parameters");
  ++step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i].array();
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i].array().square();
    params[i].array() -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.adam_eps);
  }
}

}  // namespace chl
