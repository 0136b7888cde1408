#pragma once

#include "dermforge/rng.hpp"
#include "dermforge/tensor.hpp"

namespace dermforge {

struct AugmentConfig {
    double flip_horizontal = 0.5;   // probability
    double flip_vertical = 0.5;     // probability
    double max_rotation_deg = 15.0; // angle drawn uniformly in +-max
    double brightness_delta = 0.1;  // additive shift drawn uniformly in +-delta
    double zoom_max = 0.1;          // center zoom factor drawn uniformly in [0,max]

    static AugmentConfig disabled() {
        AugmentConfig c;
        c.flip_horizontal = 0.0;
        c.flip_vertical = 0.0;
        c.max_rotation_deg = 0.0;
        c.brightness_delta = 0.0;
        c.zoom_max = 0.0;
        return c;
    }

    void validate() const;
};

// Inverse-mapped bilinear rotation about the image center with edge-replicate
// fill. |angle_deg| <= 180. angle 0 is the exact identity.
Tensor<float> rotate(const Tensor<float>& image, double angle_deg);

Tensor<float> flip_horizontal(const Tensor<float>& image);
Tensor<float> flip_vertical(const Tensor<float>& image);

// Scales about the center by 1/(1-zoom) (center crop re-expanded), bilinear.
Tensor<float> center_zoom(const Tensor<float>& image, double zoom);

// Applies, in order: horizontal flip coin, vertical flip coin, rotation,
// brightness shift, center zoom; the result is clamped to [0,1]. Exactly five
// rng draws are consumed regardless of the configuration, so streams stay
// aligned across configs.
Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& config, Rng& rng);

}  // namespace dermforge
