#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fimap/colorspace.hpp"

namespace fimap {

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h, RgbPixel fill = {});

    bool empty() const noexcept { return width == 0 || height == 0; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    RgbPixel at(int x, int y) const {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set(int x, int y, RgbPixel p) {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
        data[i] = p.r;
        data[i + 1] = p.g;
        data[i + 2] = p.b;
    }

    // Sub-rectangle [x0, x0+w) x [y0, y0+h); must lie inside the raster.
    RgbImage crop(int x0, int y0, int w, int h) const;

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Decodes any raster OpenCV understands into RGB. Grayscale is replicated
// to three channels and 16-bit input is reduced to 8 bits; both push a
// message onto `warnings` when given, as does a lossy file extension.
RgbImage read_rgb_image(const std::filesystem::path& path,
                        std::vector<std::string>* warnings = nullptr);

void write_rgb_image(const std::filesystem::path& path, const RgbImage& image);
void write_gray8(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint8_t> pixels);
void write_gray16(const std::filesystem::path& path, int width, int height,
                  std::span<const std::uint16_t> pixels);

struct Gray16Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> data;
};

Gray16Image read_gray16(const std::filesystem::path& path);

} // namespace fimap
