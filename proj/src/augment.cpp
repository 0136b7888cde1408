#include "dermforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dermforge/errors.hpp"

namespace dermforge {

void AugmentConfig::validate() const {
    if (flip_horizontal < 0.0 || flip_horizontal > 1.0 || flip_vertical < 0.0 || flip_vertical > 1.0)
        throw ArgumentError("augment: flip probabilities must be in [0,1]");
    if (max_rotation_deg < 0.0 || max_rotation_deg > 180.0)
        throw ArgumentError("augment: max_rotation_deg must be in [0,180]");
    if (brightness_delta < 0.0) throw ArgumentError("augment: brightness_delta must be >= 0");
    if (zoom_max < 0.0 || zoom_max >= 0.5) throw ArgumentError("augment: zoom_max must be in [0,0.5)");
}

namespace {

void check_chw(const Tensor<float>& image) {
    if (image.rank() != 3) throw ShapeError("augment ops expect a (c,h,w) image");
}

float sample_bilinear(const float* plane, int h, int w, double sy, double sx) {
    // edge replication: clamp the sample rectangle to the image
    const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(cy));
    const int x0 = static_cast<int>(std::floor(cx));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = cy - y0;
    const double fx = cx - x0;
    const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    const double bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

// dst(y,x) = src(center + M * (dst - center)) sampled bilinearly.
Tensor<float> affine_about_center(const Tensor<float>& image, double m00, double m01, double m10,
                                  double m11) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const double cy = (h - 1) / 2.0;
    const double cx = (w - 1) / 2.0;
    Tensor<float> out(image.shape());
    for (int ci = 0; ci < c; ++ci) {
        const float* src = image.data() + static_cast<size_t>(ci) * h * w;
        float* dst = out.data() + static_cast<size_t>(ci) * h * w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dy = y - cy;
                const double dx = x - cx;
                const double sy = cy + m00 * dy + m01 * dx;
                const double sx = cx + m10 * dy + m11 * dx;
                dst[y * w + x] = sample_bilinear(src, h, w, sy, sx);
            }
        }
    }
    return out;
}

}  // namespace

Tensor<float> rotate(const Tensor<float>& image, double angle_deg) {
    check_chw(image);
    if (std::abs(angle_deg) > 180.0) throw ArgumentError("rotate: |angle| must be <= 180");
    if (angle_deg == 0.0) return image;
    // inverse mapping: rotate destination coordinates by -angle
    const double rad = -angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    // (dy,dx) rotated: sy = cos*dy - sin*dx, sx = sin*dy + cos*dx
    return affine_about_center(image, cs, -sn, sn, cs);
}

Tensor<float> flip_horizontal(const Tensor<float>& image) {
    check_chw(image);
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor<float> out(image.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<size_t>(ci) * h + y) * w + x] =
                    image[(static_cast<size_t>(ci) * h + y) * w + (w - 1 - x)];
    return out;
}

Tensor<float> flip_vertical(const Tensor<float>& image) {
    check_chw(image);
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor<float> out(image.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<size_t>(ci) * h + y) * w + x] =
                    image[(static_cast<size_t>(ci) * h + (h - 1 - y)) * w + x];
    return out;
}

Tensor<float> center_zoom(const Tensor<float>& image, double zoom) {
    check_chw(image);
    if (zoom < 0.0 || zoom >= 1.0) throw ArgumentError("center_zoom: zoom must be in [0,1)");
    if (zoom == 0.0) return image;
    const double s = 1.0 - zoom;  // sample from the central (1-zoom) crop
    return affine_about_center(image, s, 0.0, 0.0, s);
}

Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& config, Rng& rng) {
    check_chw(image);
    config.validate();

    // all draws happen up front, in a fixed order
    const bool do_hflip = rng.next_double() < config.flip_horizontal;
    const bool do_vflip = rng.next_double() < config.flip_vertical;
    const double angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
    const double brightness = rng.uniform(-config.brightness_delta, config.brightness_delta);
    const double zoom = rng.uniform(0.0, config.zoom_max);

    Tensor<float> out = image;
    if (do_hflip) out = flip_horizontal(out);
    if (do_vflip) out = flip_vertical(out);
    if (angle != 0.0) out = rotate(out, angle);
    if (brightness != 0.0)
        for (size_t i = 0; i < out.size(); ++i) out[i] += static_cast<float>(brightness);
    if (zoom != 0.0) out = center_zoom(out, zoom);

    for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
    return out;
}

}  // namespace dermforge
