// SPDX-License-Identifier: Apache-2.0
#include "model/cd_decoder.hpp"

#include <cmath>

namespace semcc {

namespace {

template <typename T>
ConvParams<T> make_conv(ParameterStore<T>& ps, const std::string& name, Shape kshape, int out) {
  ConvParams<T> c;
  const int fan_in = static_cast<int>(shape_numel(kshape) / kshape[0]);
  c.kernel = ps.create(name + "/kernel", kshape, Init::kNormal, std::sqrt(2.0 / fan_in));
  c.bias = ps.create(name + "/bias", {out}, Init::kZeros);
  return c;
}

}  // namespace

template <typename T>
CdDecoder<T>::CdDecoder(ParameterStore<T>& ps, const CdDecoderConfig& cfg, const EncoderConfig& enc)
    : grid_(enc.grid()), image_size_(enc.image_size) {
  const int in = 2 * enc.cd_channels;
  const int P = cfg.pyramid_channels;
  const int R = cfg.refine_channels;
  up4a = make_conv(ps, "cd_decoder/up4a", {in, P, 2, 2}, P);
  up4b = make_conv(ps, "cd_decoder/up4b", {P, P, 2, 2}, P);
  up8 = make_conv(ps, "cd_decoder/up8", {in, P, 2, 2}, P);
  down32 = make_conv(ps, "cd_decoder/down32", {P, in, 3, 3}, P);
  const int lat_in[4] = {P, P, in, P};
  for (int i = 0; i < 4; ++i) {
    lateral[i] = make_conv(ps, "cd_decoder/lateral" + std::to_string(i), {P, lat_in[i], 1, 1}, P);
    refine[i] = make_conv(ps, "cd_decoder/refine" + std::to_string(i), {R, P, 3, 3}, R);
  }
  head = make_conv(ps, "cd_decoder/head", {1, 4 * R, 1, 1}, 1);
}

template <typename T>
Pyramid<T> CdDecoder<T>::simple_fpn(const Tensor<T>& f1, const Tensor<T>& f2) const {
  if (f1.shape() != f2.shape()) throw DimensionError("simple_fpn: " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  const int g = grid_;
  Tensor<T> x = transpose(concat<T>({f1, f2}, 1));
  x = reshape(x, {x.dim(0), g, g});
  Pyramid<T> p;
  p[0] = conv_transpose2x2(gelu(conv_transpose2x2(x, up4a.kernel, up4a.bias)), up4b.kernel, up4b.bias);
  p[1] = conv_transpose2x2(x, up8.kernel, up8.bias);
  p[2] = x;
  p[3] = conv2d(x, down32.kernel, down32.bias, 2, 1, Padding::kReplicate);
  for (int i = 0; i < 4; ++i) p[i] = conv2d(p[i], lateral[i].kernel, lateral[i].bias, 1, 0);
  return p;
}

template <typename T>
Tensor<T> CdDecoder<T>::fuse_predict(const Pyramid<T>& p) const {
  const int s = 4 * grid_;
  std::vector<Tensor<T>> maps;
  for (int i = 0; i < 4; ++i) {
    Tensor<T> r = gelu(conv2d(p[i], refine[i].kernel, refine[i].bias, 1, 1, Padding::kReplicate));
    maps.push_back(resize_bilinear(r, s, s));
  }
  Tensor<T> logits = conv2d(concat(maps, 0), head.kernel, head.bias, 1, 0);
  return resize_bilinear(logits, image_size_, image_size_);
}

template class CdDecoder<float>;
template class CdDecoder<double>;

}  // namespace semcc
