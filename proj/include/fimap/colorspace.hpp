#pragma once

#include <cstdint>

namespace fimap {

struct RgbPixel {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const RgbPixel&, const RgbPixel&) = default;
};

/// Full-range YCbCr, each channel in [0, 255].
struct YCbCrPixel {
    double y = 0.0;
    double cb = 128.0;
    double cr = 128.0;
};

/// Hue in degrees [0, 360); saturation and value in [0, 1].
/// Hue is 0 whenever saturation is 0.
struct HsvPixel {
    double h = 0.0;
    double s = 0.0;
    double v = 0.0;
};

// Full-range BT.601, clamped to [0, 255].
YCbCrPixel rgb_to_ycbcr(RgbPixel p);
YCbCrPixel rgb_to_ycbcr(double r, double g, double b);

// Luma only; same coefficients as rgb_to_ycbcr.
double luma(double r, double g, double b);

HsvPixel rgb_to_hsv(RgbPixel p);

/// Hexcone inverse of rgb_to_hsv; channels are rounded to the nearest
/// integer. Hue is taken modulo 360, s and v are clamped to [0, 1].
RgbPixel hsv_to_rgb(HsvPixel p);

/// log2(N^2 / t) + log2(ISO / 100). Throws fimap::Error on a nonpositive
/// argument.
double absolute_ev(double aperture_n, double shutter_s, double iso);

/// lux * t in lux-seconds. Throws fimap::Error on a negative argument.
double luminous_exposure(double lux, double shutter_s);

} // namespace fimap
