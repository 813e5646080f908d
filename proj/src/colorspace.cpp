#include "fimap/colorspace.hpp"

#include <algorithm>
#include <cmath>

#include "fimap/error.hpp"

namespace fimap {

namespace {

double clamp255(double x) { return std::clamp(x, 0.0, 255.0); }

} // namespace

double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

YCbCrPixel rgb_to_ycbcr(double r, double g, double b) {
    return {
        clamp255(luma(r, g, b)),
        clamp255(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b),
        clamp255(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b),
    };
}

YCbCrPixel rgb_to_ycbcr(RgbPixel p) {
    return rgb_to_ycbcr(p.r, p.g, p.b);
}

HsvPixel rgb_to_hsv(RgbPixel p) {
    const int r = p.r, g = p.g, b = p.b;
    const int mx = std::max({r, g, b});
    const int mn = std::min({r, g, b});
    const double delta = mx - mn;

    HsvPixel out;
    out.v = mx / 255.0;
    if (mx == 0 || delta == 0) {
        return out;
    }
    out.s = delta / mx;

    double h;
    if (mx == r) {
        h = 60.0 * ((g - b) / delta);
    } else if (mx == g) {
        h = 60.0 * (2.0 + (b - r) / delta);
    } else {
        h = 60.0 * (4.0 + (r - g) / delta);
    }
    if (h < 0.0) {
        h += 360.0;
    }
    if (h >= 360.0) {
        h -= 360.0;
    }
    out.h = h;
    return out;
}

RgbPixel hsv_to_rgb(HsvPixel p) {
    double h = std::fmod(p.h, 360.0);
    if (h < 0.0) {
        h += 360.0;
    }
    const double s = std::clamp(p.s, 0.0, 1.0);
    const double v = std::clamp(p.v, 0.0, 1.0);

    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(hp) % 6) {
    case 0: r1 = c; g1 = x; break;
    case 1: r1 = x; g1 = c; break;
    case 2: g1 = c; b1 = x; break;
    case 3: g1 = x; b1 = c; break;
    case 4: r1 = x; b1 = c; break;
    default: r1 = c; b1 = x; break;
    }
    const double m = v - c;
    auto q = [](double u) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(u * 255.0, 0.0, 255.0)));
    };
    return {q(r1 + m), q(g1 + m), q(b1 + m)};
}

double absolute_ev(double aperture_n, double shutter_s, double iso) {
    if (!(aperture_n > 0.0) || !(shutter_s > 0.0) || !(iso > 0.0)) {
        throw Error("absolute_ev: aperture, shutter time and ISO must be positive");
    }
    return std::log2(aperture_n * aperture_n / shutter_s) + std::log2(iso / 100.0);
}

double luminous_exposure(double lux, double shutter_s) {
    if (lux < 0.0 || shutter_s < 0.0) {
        throw Error("luminous_exposure: lux and shutter time must be nonnegative");
    }
    return lux * shutter_s;
}

} // namespace fimap
