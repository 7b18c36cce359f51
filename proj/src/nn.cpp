#include "speakloc/nn.hpp"

#include "speakloc/errors.hpp"

#include <cmath>

namespace speakloc::nn {

namespace {

template <typename Scalar>
void fill_uniform(Mat<Scalar>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
Mat<Scalar> hstack(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  Mat<Scalar> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Conv3d

template <typename Scalar>
Conv3d<Scalar>::Conv3d(Index in_channels, Index out_channels, Triple k, Triple s)
    : kernel(k), stride(s) {
  weight = Mat<Scalar>::Zero(k[0] * k[1] * k[2] * in_channels, out_channels);
  bias = Mat<Scalar>::Zero(1, out_channels);
}

template <typename Scalar>
void Conv3d<Scalar>::init(std::mt19937_64& rng) {
  // He-uniform for ReLU stacks.
  fill_uniform(weight, std::sqrt(6.0 / static_cast<double>(weight.rows())), rng);
  bias.setZero();
}

template <typename Scalar>
Volume<Scalar> Conv3d<Scalar>::forward(const Volume<Scalar>& x, Cache* cache) const {
  Mat<Scalar> patches = im2col(x, kernel, stride);
  Volume<Scalar> y(output_extent(x.extent), Mat<Scalar>());
  y.values.noalias() = patches * weight;
  y.values.rowwise() += bias.row(0);
  if (cache != nullptr) {
    cache->patches = std::move(patches);
    cache->in_extent = x.extent;
  }
  return y;
}

template <typename Scalar>
Volume<Scalar> Conv3d<Scalar>::backward(const Cache& cache, const Volume<Scalar>& dy,
                                        Conv3d* grad, bool input_grad) const {
  if (grad != nullptr) {
    grad->weight.noalias() += cache.patches.transpose() * dy.values;
    grad->bias += dy.values.colwise().sum();
  }
  if (!input_grad) return {};
  Mat<Scalar> dpatches = dy.values * weight.transpose();
  return col2im(dpatches, cache.in_extent, in_channels(), kernel, stride);
}

template <typename Scalar>
Conv3d<Scalar> Conv3d<Scalar>::zeros_like() const {
  Conv3d z;
  z.kernel = kernel;
  z.stride = stride;
  z.weight = Mat<Scalar>::Zero(weight.rows(), weight.cols());
  z.bias = Mat<Scalar>::Zero(bias.rows(), bias.cols());
  return z;
}

// -------------------------------------------------------------- ConvLstm

template <typename Scalar>
ConvLstm<Scalar>::ConvLstm(Index in_channels, Index hidden, Index k) : kernel_hw(k) {
  weight = Mat<Scalar>::Zero(k * k * (in_channels + hidden), 4 * hidden);
  bias = Mat<Scalar>::Zero(1, 4 * hidden);
}

template <typename Scalar>
void ConvLstm<Scalar>::init(std::mt19937_64& rng) {
  fill_uniform(weight, std::sqrt(6.0 / static_cast<double>(weight.rows() + weight.cols())), rng);
  bias.setZero();
  const Index h = hidden();
  bias.block(0, h, 1, h).setConstant(Scalar(1));  // forget gate
}

template <typename Scalar>
Volume<Scalar> ConvLstm<Scalar>::forward(const Volume<Scalar>& x, bool reverse,
                                         Cache* cache) const {
  const Extent& e = x.extent;
  const Index h = hidden();
  const Index plane = e.plane();
  const Extent frame_extent{1, e.height, e.width};
  const Triple k{1, kernel_hw, kernel_hw};
  const Triple s{1, 1, 1};

  Volume<Scalar> out(e, h);
  Mat<Scalar> hidden_state = Mat<Scalar>::Zero(plane, h);
  Mat<Scalar> cell = Mat<Scalar>::Zero(plane, h);
  if (cache != nullptr) {
    cache->extent = e;
    cache->in_channels = x.channels();
    cache->reverse = reverse;
    cache->patches.assign(static_cast<std::size_t>(e.frames), {});
    cache->gates.assign(static_cast<std::size_t>(e.frames), {});
    cache->cells.assign(static_cast<std::size_t>(e.frames), {});
    cache->tanh_cells.assign(static_cast<std::size_t>(e.frames), {});
  }

  for (Index step = 0; step < e.frames; ++step) {
    const Index t = reverse ? e.frames - 1 - step : step;
    Volume<Scalar> joined(frame_extent, hstack<Scalar>(x.frame(t), hidden_state));
    Mat<Scalar> patches = im2col(joined, k, s);
    Mat<Scalar> z = patches * weight;
    z.rowwise() += bias.row(0);

    Mat<Scalar> gates(plane, 4 * h);
    gates.leftCols(3 * h) = z.leftCols(3 * h).unaryExpr([](Scalar v) { return sigmoid(v); });
    gates.rightCols(h) = z.rightCols(h).array().tanh();

    cell = gates.middleCols(h, h).cwiseProduct(cell) +
           gates.leftCols(h).cwiseProduct(gates.rightCols(h));
    Mat<Scalar> tanh_cell = cell.array().tanh();
    hidden_state = gates.middleCols(2 * h, h).cwiseProduct(tanh_cell);
    out.frame(t) = hidden_state;

    if (cache != nullptr) {
      const auto i = static_cast<std::size_t>(step);
      cache->patches[i] = std::move(patches);
      cache->gates[i] = std::move(gates);
      cache->cells[i] = cell;
      cache->tanh_cells[i] = std::move(tanh_cell);
    }
  }
  return out;
}

template <typename Scalar>
Volume<Scalar> ConvLstm<Scalar>::backward(const Cache& cache, const Volume<Scalar>& dh,
                                          ConvLstm* grad) const {
  const Extent& e = cache.extent;
  const Index h = hidden();
  const Index cin = cache.in_channels;
  const Index plane = e.plane();
  const Extent frame_extent{1, e.height, e.width};
  const Triple k{1, kernel_hw, kernel_hw};
  const Triple s{1, 1, 1};

  Volume<Scalar> dx(e, cin);
  Mat<Scalar> dh_next = Mat<Scalar>::Zero(plane, h);
  Mat<Scalar> dc_next = Mat<Scalar>::Zero(plane, h);
  const Mat<Scalar> zero_cell = Mat<Scalar>::Zero(plane, h);

  for (Index step = e.frames - 1; step >= 0; --step) {
    const Index t = cache.reverse ? e.frames - 1 - step : step;
    const auto i = static_cast<std::size_t>(step);
    const Mat<Scalar>& gates = cache.gates[i];
    const Mat<Scalar>& tanh_cell = cache.tanh_cells[i];
    const Mat<Scalar>& cell_prev = step > 0 ? cache.cells[i - 1] : zero_cell;

    const auto in_gate = gates.leftCols(h).array();
    const auto forget_gate = gates.middleCols(h, h).array();
    const auto out_gate = gates.middleCols(2 * h, h).array();
    const auto cand = gates.rightCols(h).array();

    Mat<Scalar> dhid = dh.frame(t) + dh_next;
    Mat<Scalar> dcell =
        dc_next.array() + dhid.array() * out_gate * (Scalar(1) - tanh_cell.array().square());

    Mat<Scalar> dz(plane, 4 * h);
    dz.leftCols(h) = (dcell.array() * cand * in_gate * (Scalar(1) - in_gate)).matrix();
    dz.middleCols(h, h) =
        (dcell.array() * cell_prev.array() * forget_gate * (Scalar(1) - forget_gate)).matrix();
    dz.middleCols(2 * h, h) =
        (dhid.array() * tanh_cell.array() * out_gate * (Scalar(1) - out_gate)).matrix();
    dz.rightCols(h) = (dcell.array() * in_gate * (Scalar(1) - cand.square())).matrix();
    dc_next = (dcell.array() * forget_gate).matrix();

    if (grad != nullptr) {
      grad->weight.noalias() += cache.patches[i].transpose() * dz;
      grad->bias += dz.colwise().sum();
    }
    Mat<Scalar> dpatches = dz * weight.transpose();
    Volume<Scalar> djoined = col2im(dpatches, frame_extent, cin + h, k, s);
    dx.frame(t) = djoined.values.leftCols(cin);
    dh_next = djoined.values.rightCols(h);
  }
  return dx;
}

template <typename Scalar>
ConvLstm<Scalar> ConvLstm<Scalar>::zeros_like() const {
  ConvLstm z;
  z.kernel_hw = kernel_hw;
  z.weight = Mat<Scalar>::Zero(weight.rows(), weight.cols());
  z.bias = Mat<Scalar>::Zero(bias.rows(), bias.cols());
  return z;
}

// ------------------------------------------------------------ BiConvLstm

template <typename Scalar>
Volume<Scalar> BiConvLstm<Scalar>::forward(const Volume<Scalar>& x, Cache* cache) const {
  Volume<Scalar> a = forward_cell.forward(x, false, cache ? &cache->fwd : nullptr);
  Volume<Scalar> b = backward_cell.forward(x, true, cache ? &cache->bwd : nullptr);
  return Volume<Scalar>(x.extent, hstack(a.values, b.values));
}

template <typename Scalar>
Volume<Scalar> BiConvLstm<Scalar>::backward(const Cache& cache, const Volume<Scalar>& dy,
                                            BiConvLstm* grad) const {
  const Index h = forward_cell.hidden();
  Volume<Scalar> da(dy.extent, Mat<Scalar>(dy.values.leftCols(h)));
  Volume<Scalar> db(dy.extent, Mat<Scalar>(dy.values.rightCols(h)));
  Volume<Scalar> dx = forward_cell.backward(cache.fwd, da, grad ? &grad->forward_cell : nullptr);
  dx.values += backward_cell.backward(cache.bwd, db, grad ? &grad->backward_cell : nullptr).values;
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename Scalar>
Dense<Scalar>::Dense(Index in, Index out) {
  weight = Mat<Scalar>::Zero(in, out);
  bias = Mat<Scalar>::Zero(1, out);
}

template <typename Scalar>
void Dense<Scalar>::init(std::mt19937_64& rng) {
  fill_uniform(weight, std::sqrt(6.0 / static_cast<double>(weight.rows() + weight.cols())), rng);
  bias.setZero();
}

template <typename Scalar>
Mat<Scalar> Dense<Scalar>::forward(const Mat<Scalar>& x) const {
  Mat<Scalar> y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

template <typename Scalar>
Mat<Scalar> Dense<Scalar>::backward(const Mat<Scalar>& x, const Mat<Scalar>& dy,
                                    Dense* grad) const {
  if (grad != nullptr) {
    grad->weight.noalias() += x.transpose() * dy;
    grad->bias += dy.colwise().sum();
  }
  return dy * weight.transpose();
}

template <typename Scalar>
Dense<Scalar> Dense<Scalar>::zeros_like() const {
  Dense z;
  z.weight = Mat<Scalar>::Zero(weight.rows(), weight.cols());
  z.bias = Mat<Scalar>::Zero(bias.rows(), bias.cols());
  return z;
}

template class Conv3d<float>;
template class Conv3d<double>;
template class ConvLstm<float>;
template class ConvLstm<double>;
template class BiConvLstm<float>;
template class BiConvLstm<double>;
template class Dense<float>;
template class Dense<double>;

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "nesterov";
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "nesterov" || text == "sgd") return OptimizerKind::kNesterov;
  throw ConfigError("unknown optimizer '" + text + "' (expected adam or nesterov)");
}

}  // namespace speakloc::nn
