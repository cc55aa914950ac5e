#pragma once

// Translation-only differentiable glimpse cropping and the sinusoidal
// position embeddings shared between full-frame and glimpse patches.
//
// Coordinates: a glimpse center is normalized to [-1,1]^2 with (-1,-1) the
// top-left frame corner. The sampling grid is an integer-spaced g x g
// lattice rigidly translated so its centroid lands at the requested center;
// crops are native resolution, never rescaled. Samples outside the frame
// read as zero, which keeps the location->glimpse map differentiable
// everywhere instead of clamping at the borders.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "glitr/autodiff.hpp"
#include "glitr/tensor.hpp"

namespace glitr {

struct GlimpseLocation {
  double y = 0.0;
  double x = 0.0;

  void validate() const {
    if (!(y >= -1.0 && y <= 1.0 && x >= -1.0 && x <= 1.0))
      throw std::invalid_argument("glimpse location outside [-1,1]^2");
  }
};

struct GlimpseGeometry {
  int frame_h = 64;
  int frame_w = 64;
  int glimpse_g = 24;
  int patch_p = 8;
  int channels = 1;

  void validate() const {
    if (glimpse_g <= 0 || glimpse_g > std::min(frame_h, frame_w))
      throw std::invalid_argument("glimpse size exceeds frame");
    if (patch_p <= 0 || glimpse_g % patch_p != 0)
      throw std::invalid_argument("patch size must divide glimpse size");
    if (channels <= 0) throw std::invalid_argument("channels must be positive");
  }

  // full-frame patching additionally requires the frame to tile exactly
  void validate_full_frame() const {
    validate();
    if (frame_h % patch_p != 0 || frame_w % patch_p != 0)
      throw std::invalid_argument("patch size must divide frame size");
  }

  int glimpse_patches() const {
    int q = glimpse_g / patch_p;
    return q * q;
  }
  int frame_patches() const { return (frame_h / patch_p) * (frame_w / patch_p); }
  int patch_dim() const { return patch_p * patch_p * channels; }
};

// g x g lattice of source pixel coordinates, last axis (y, x)
template <typename T>
struct SamplingGridT {
  TensorT<T> coords;  // [g, g, 2]
  T base_y = 0, base_x = 0;
  int g = 0;
};

using SamplingGrid = SamplingGridT<float>;

template <typename T>
T center_to_pixel_y(T cy, int frame_h) {
  return (cy + T(1)) * T(0.5) * T(frame_h - 1);
}
template <typename T>
T center_to_pixel_x(T cx, int frame_w) {
  return (cx + T(1)) * T(0.5) * T(frame_w - 1);
}

template <typename T>
SamplingGridT<T> make_sampling_grid(T cy, T cx, const GlimpseGeometry& geom) {
  geom.validate();
  int g = geom.glimpse_g;
  SamplingGridT<T> grid;
  grid.g = g;
  grid.base_y = center_to_pixel_y(cy, geom.frame_h) - T(g - 1) / T(2);
  grid.base_x = center_to_pixel_x(cx, geom.frame_w) - T(g - 1) / T(2);
  grid.coords = TensorT<T>({g, g, 2});
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      grid.coords[(size_t(i) * g + j) * 2 + 0] = grid.base_y + T(i);
      grid.coords[(size_t(i) * g + j) * 2 + 1] = grid.base_x + T(j);
    }
  return grid;
}

template <typename T>
SamplingGridT<T> make_sampling_grid(const GlimpseLocation& c, const GlimpseGeometry& geom) {
  c.validate();
  return make_sampling_grid(T(c.y), T(c.x), geom);
}

// Tracks which distinct source pixels a sampler touched; used to audit the
// partial-observability contract.
struct PixelAudit {
  int h = 0, w = 0;
  std::vector<uint8_t> touched;

  void reset(int hh, int ww) {
    h = hh;
    w = ww;
    touched.assign(size_t(hh) * ww, 0);
  }
  void mark(int y, int x) {
    if (y >= 0 && y < h && x >= 0 && x < w) touched[size_t(y) * w + x] = 1;
  }
  size_t distinct_pixels() const {
    size_t n = 0;
    for (uint8_t v : touched) n += v;
    return n;
  }
};

// Bilinear interpolation of the 4 nearest source pixels, zero outside the
// frame. Output [C, g, g].
template <typename T>
TensorT<T> bilinear_sample(const TensorT<T>& frame, const SamplingGridT<T>& grid,
                           PixelAudit* audit = nullptr) {
  if (frame.ndim() != 3) throw std::invalid_argument("bilinear_sample: frame must be [C,H,W]");
  int C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  int g = grid.g;
  TensorT<T> out({C, g, g});
  auto pix = [&](int c, int y, int x) -> T {
    if (y < 0 || y >= H || x < 0 || x >= W) return T(0);
    if (audit) audit->mark(y, x);
    return frame[(size_t(c) * H + y) * W + x];
  };
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      T sy = grid.coords[(size_t(i) * g + j) * 2 + 0];
      T sx = grid.coords[(size_t(i) * g + j) * 2 + 1];
      int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
      T wy = sy - T(y0), wx = sx - T(x0);
      // zero-weight corners are never read, so pixel-aligned grids sense
      // exactly the crop
      for (int c = 0; c < C; ++c) {
        T acc = T(0);
        if (wy < T(1) && wx < T(1)) acc += (T(1) - wy) * (T(1) - wx) * pix(c, y0, x0);
        if (wy < T(1) && wx > T(0)) acc += (T(1) - wy) * wx * pix(c, y0, x0 + 1);
        if (wy > T(0) && wx < T(1)) acc += wy * (T(1) - wx) * pix(c, y0 + 1, x0);
        if (wy > T(0) && wx > T(0)) acc += wy * wx * pix(c, y0 + 1, x0 + 1);
        out[(size_t(c) * g + i) * g + j] = acc;
      }
    }
  return out;
}

// ------------------------------------------------------- position embeddings

// Fixed 2-D sinusoid evaluated at continuous normalized coordinates.
// d/4 frequency bands per axis on a geometric ladder from 1 to freq_max;
// layout [sin_y | cos_y | sin_x | cos_x].
inline double posembed_max_freq(const GlimpseGeometry& geom) {
  double per_side = double(std::max(geom.frame_h, geom.frame_w)) / geom.patch_p;
  return 3.14159265358979323846 * per_side * 0.5;
}

template <typename T>
void sinusoid_embed_2d(T uy, T ux, int d, double freq_max, T* out) {
  int bands = d / 4;
  for (int i = 0; i < bands; ++i) {
    double w = bands == 1 ? 1.0 : std::pow(freq_max, double(i) / (bands - 1));
    out[i] = std::sin(T(w) * uy);
    out[bands + i] = std::cos(T(w) * uy);
    out[2 * bands + i] = std::sin(T(w) * ux);
    out[3 * bands + i] = std::cos(T(w) * ux);
  }
}

// normalized full-frame coordinate of the (a,b) patch center of a glimpse
// centered at (cy, cx); affine in the center with unit slope
template <typename T>
T patch_center_u(T c, int a, int p, int g, int frame_extent) {
  return c + T(2) * (T(a * p) + T(p - 1) / T(2) - T(g - 1) / T(2)) / T(frame_extent - 1);
}

template <typename T>
TensorT<T> patch_position_embeddings(T cy, T cx, const GlimpseGeometry& geom, int d) {
  geom.validate();
  if (d % 4 != 0) throw std::invalid_argument("position embedding dim must be divisible by 4");
  int q = geom.glimpse_g / geom.patch_p;
  double fm = posembed_max_freq(geom);
  TensorT<T> out({q * q, d});
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      T uy = patch_center_u(cy, a, geom.patch_p, geom.glimpse_g, geom.frame_h);
      T ux = patch_center_u(cx, b, geom.patch_p, geom.glimpse_g, geom.frame_w);
      sinusoid_embed_2d(uy, ux, d, fm, out.data() + size_t(a * q + b) * d);
    }
  return out;
}

template <typename T>
TensorT<T> patch_position_embeddings(const GlimpseLocation& c, const GlimpseGeometry& geom, int d) {
  c.validate();
  return patch_position_embeddings(T(c.y), T(c.x), geom, d);
}

// Embeddings for the (H/p)x(W/p) patches of a full frame; the same sinusoid
// at the full-frame patch centers, so a glimpse patch that lands exactly on
// a frame patch gets an identical embedding.
template <typename T>
TensorT<T> full_frame_position_embeddings(const GlimpseGeometry& geom, int d) {
  geom.validate_full_frame();
  if (d % 4 != 0) throw std::invalid_argument("position embedding dim must be divisible by 4");
  int qh = geom.frame_h / geom.patch_p, qw = geom.frame_w / geom.patch_p;
  double fm = posembed_max_freq(geom);
  TensorT<T> out({qh * qw, d});
  for (int a = 0; a < qh; ++a)
    for (int b = 0; b < qw; ++b) {
      T py = T(a * geom.patch_p) + T(geom.patch_p - 1) / T(2);
      T px = T(b * geom.patch_p) + T(geom.patch_p - 1) / T(2);
      T uy = T(2) * py / T(geom.frame_h - 1) - T(1);
      T ux = T(2) * px / T(geom.frame_w - 1) - T(1);
      sinusoid_embed_2d(uy, ux, d, fm, out.data() + size_t(a * qw + b) * d);
    }
  return out;
}

// ----------------------------------------------------------- autodiff ops

// Differentiable crop: builds the sampling grid from a [2] center var (y,x)
// and bilinearly samples the frame. Gradients flow to the frame values and,
// through the grid translation, to the center.
template <typename T>
Var<T> crop_glimpse(const Var<T>& frame, const Var<T>& center, const GlimpseGeometry& geom,
                    PixelAudit* audit = nullptr) {
  detail::require(center.value().numel() == 2, "crop_glimpse: center must have 2 coords");
  T cy = center.value()[0], cx = center.value()[1];
  SamplingGridT<T> grid = make_sampling_grid(cy, cx, geom);
  TensorT<T> out = bilinear_sample(frame.value(), grid, audit);
  int H = geom.frame_h, W = geom.frame_w, g = geom.glimpse_g;
  int C = geom.channels;
  return detail::make_node<T>(
      std::move(out), {frame, center}, [grid, C, H, W, g](Node<T>& self) {
        auto& pframe = self.parents[0];
        auto& pcenter = self.parents[1];
        const TensorT<T>& fv = pframe->value;
        bool want_frame = pframe->requires_grad;
        bool want_center = pcenter->requires_grad;
        T* df = want_frame ? pframe->grad_ref().data() : nullptr;
        T acc_y = T(0), acc_x = T(0);
        auto pix = [&](int c, int y, int x) -> T {
          if (y < 0 || y >= H || x < 0 || x >= W) return T(0);
          return fv[(size_t(c) * H + y) * W + x];
        };
        for (int i = 0; i < g; ++i)
          for (int j = 0; j < g; ++j) {
            T sy = grid.coords[(size_t(i) * g + j) * 2 + 0];
            T sx = grid.coords[(size_t(i) * g + j) * 2 + 1];
            int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
            T wy = sy - T(y0), wx = sx - T(x0);
            for (int c = 0; c < C; ++c) {
              T go = self.grad[(size_t(c) * g + i) * g + j];
              if (go == T(0)) continue;
              if (want_frame) {
                auto scatter = [&](int y, int x, T w) {
                  if (y >= 0 && y < H && x >= 0 && x < W)
                    df[(size_t(c) * H + y) * W + x] += go * w;
                };
                scatter(y0, x0, (T(1) - wy) * (T(1) - wx));
                scatter(y0, x0 + 1, (T(1) - wy) * wx);
                scatter(y0 + 1, x0, wy * (T(1) - wx));
                scatter(y0 + 1, x0 + 1, wy * wx);
              }
              if (want_center) {
                T v00 = pix(c, y0, x0), v01 = pix(c, y0, x0 + 1);
                T v10 = pix(c, y0 + 1, x0), v11 = pix(c, y0 + 1, x0 + 1);
                acc_y += go * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
                acc_x += go * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
              }
            }
          }
        if (want_center) {
          TensorT<T>& dc = pcenter->grad_ref();
          dc[0] += acc_y * T(H - 1) / T(2);  // d(source pixel)/d(center)
          dc[1] += acc_x * T(W - 1) / T(2);
        }
      });
}

// Differentiable position embeddings for the patches of a glimpse at a
// [2] center var. Output [N, d].
template <typename T>
Var<T> glimpse_pos_embed(const Var<T>& center, const GlimpseGeometry& geom, int d) {
  detail::require(center.value().numel() == 2, "glimpse_pos_embed: center must have 2 coords");
  T cy = center.value()[0], cx = center.value()[1];
  TensorT<T> out = patch_position_embeddings(cy, cx, geom, d);
  int q = geom.glimpse_g / geom.patch_p;
  double fm = posembed_max_freq(geom);
  return detail::make_node<T>(std::move(out), {center}, [q, d, fm](Node<T>& self) {
    auto& pcenter = self.parents[0];
    if (!pcenter->requires_grad) return;
    int bands = d / 4;
    T acc_y = T(0), acc_x = T(0);
    for (int n = 0; n < q * q; ++n) {
      const T* g = self.grad.data() + size_t(n) * d;
      const T* v = self.value.data() + size_t(n) * d;
      for (int i = 0; i < bands; ++i) {
        T w = T(bands == 1 ? 1.0 : std::pow(fm, double(i) / (bands - 1)));
        // d sin(wu)/du = w cos(wu), d cos(wu)/du = -w sin(wu); du/dc = 1
        acc_y += g[i] * w * v[bands + i] - g[bands + i] * w * v[i];
        acc_x += g[2 * bands + i] * w * v[3 * bands + i] - g[3 * bands + i] * w * v[2 * bands + i];
      }
    }
    TensorT<T>& dc = pcenter->grad_ref();
    dc[0] += acc_y;
    dc[1] += acc_x;
  });
}

// [C,gh,gw] image -> [N, p*p*C] rows of flattened patches, patch-major
// row-major over the patch lattice, [c][py][px] within a patch.
template <typename T>
Var<T> extract_patches(const Var<T>& img, int p) {
  detail::require(img.value().ndim() == 3, "extract_patches: need [C,H,W]");
  int C = img.value().dim(0), H = img.value().dim(1), W = img.value().dim(2);
  detail::require(H % p == 0 && W % p == 0, "extract_patches: patch must tile image");
  int qh = H / p, qw = W / p;
  TensorT<T> out({qh * qw, p * p * C});
  for (int a = 0; a < qh; ++a)
    for (int b = 0; b < qw; ++b) {
      T* row = out.data() + size_t(a * qw + b) * (p * p * C);
      int k = 0;
      for (int c = 0; c < C; ++c)
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px)
            row[k++] = img.value()[(size_t(c) * H + a * p + py) * W + b * p + px];
    }
  return detail::make_node<T>(std::move(out), {img}, [C, H, W, p, qh, qw](Node<T>& self) {
    auto& pimg = self.parents[0];
    if (!pimg->requires_grad) return;
    T* di = pimg->grad_ref().data();
    for (int a = 0; a < qh; ++a)
      for (int b = 0; b < qw; ++b) {
        const T* row = self.grad.data() + size_t(a * qw + b) * (p * p * C);
        int k = 0;
        for (int c = 0; c < C; ++c)
          for (int py = 0; py < p; ++py)
            for (int px = 0; px < p; ++px)
              di[(size_t(c) * H + a * p + py) * W + b * p + px] += row[k++];
      }
  });
}

}  // namespace glitr
