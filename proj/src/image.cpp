#include "fimap/image.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fimap/error.hpp"

namespace fimap {

RgbImage::RgbImage(int w, int h, RgbPixel fill) : width(w), height(h) {
    if (w < 0 || h < 0) {
        throw Error("RgbImage: negative dimensions");
    }
    data.resize(3 * pixel_count());
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        data[3 * i] = fill.r;
        data[3 * i + 1] = fill.g;
        data[3 * i + 2] = fill.b;
    }
}

RgbImage RgbImage::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width || y0 + h > height) {
        throw Error("RgbImage::crop: rectangle outside raster");
    }
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y) {
        const auto* src = data.data() + 3 * (static_cast<std::size_t>(y0 + y) * width + x0);
        std::copy(src, src + 3 * w, out.data.data() + 3 * static_cast<std::size_t>(y) * w);
    }
    return out;
}

namespace {

bool lossy_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".webp";
}

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
    ensure_parent(path);
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw Error("cannot write image " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw Error("cannot write image " + path.string());
    }
}

} // namespace

RgbImage read_rgb_image(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    auto warn = [&](std::string msg) {
        if (warnings) {
            warnings->push_back(path.string() + ": " + std::move(msg));
        }
    };
    if (!std::filesystem::exists(path)) {
        throw Error("image not found: " + path.string());
    }
    cv::Mat raw;
    try {
        raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw Error("cannot decode image " + path.string() + ": " + e.what());
    }
    if (raw.empty()) {
        throw Error("cannot decode image " + path.string());
    }
    if (lossy_extension(path)) {
        warn("lossy format; compression artifacts may bias color statistics");
    }
    if (raw.depth() == CV_16U) {
        warn("16-bit raster reduced to 8 bits per channel");
        raw.convertTo(raw, CV_8U, 1.0 / 257.0);
    } else if (raw.depth() != CV_8U) {
        throw Error("unsupported sample depth in " + path.string());
    }

    cv::Mat rgb;
    switch (raw.channels()) {
    case 1:
        warn("grayscale raster replicated to RGB");
        cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
        break;
    case 3:
        cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
        break;
    case 4:
        cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
        break;
    default:
        throw Error("unsupported channel count in " + path.string());
    }

    RgbImage out(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<std::uint8_t>(y);
        std::copy(row, row + 3 * rgb.cols, out.data.data() + 3 * static_cast<std::size_t>(y) * rgb.cols);
    }
    return out;
}

void write_rgb_image(const std::filesystem::path& path, const RgbImage& image) {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.data.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    write_mat(path, bgr);
}

void write_gray8(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint8_t> pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error("write_gray8: buffer size does not match dimensions");
    }
    cv::Mat m(height, width, CV_8UC1, const_cast<std::uint8_t*>(pixels.data()));
    write_mat(path, m);
}

void write_gray16(const std::filesystem::path& path, int width, int height,
                  std::span<const std::uint16_t> pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error("write_gray16: buffer size does not match dimensions");
    }
    cv::Mat m(height, width, CV_16UC1, const_cast<std::uint16_t*>(pixels.data()));
    write_mat(path, m);
}

Gray16Image read_gray16(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error("image not found: " + path.string());
    }
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw Error("cannot decode image " + path.string());
    }
    if (raw.channels() != 1) {
        throw Error("expected a single-channel label raster: " + path.string());
    }
    if (raw.depth() != CV_16U) {
        raw.convertTo(raw, CV_16U);
    }
    Gray16Image out{raw.cols, raw.rows, {}};
    out.data.resize(static_cast<std::size_t>(raw.cols) * raw.rows);
    for (int y = 0; y < raw.rows; ++y) {
        const auto* row = raw.ptr<std::uint16_t>(y);
        std::copy(row, row + raw.cols, out.data.data() + static_cast<std::size_t>(y) * raw.cols);
    }
    return out;
}

} // namespace fimap
