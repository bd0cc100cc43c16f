#include "igd/image_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace igd {

Tensor load_image_file(const std::string& path, int height, int width, int channels) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("load_image_file: channels must be 1 or 3");
    cv::Mat m = cv::imread(path, channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("unreadable image file: " + path);
    cv::Mat resized;
    if (m.rows == height && m.cols == width)
        resized = m;
    else
        cv::resize(m, resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    Tensor out({channels, height, width});
    if (channels == 1) {
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w)
                out[static_cast<std::size_t>(h) * width + w] =
                    static_cast<double>(resized.at<std::uint8_t>(h, w)) / 255.0;
    } else {
        // OpenCV decodes BGR; store RGB.
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w) {
                const cv::Vec3b px = resized.at<cv::Vec3b>(h, w);
                const std::size_t hw = static_cast<std::size_t>(height) * width;
                const std::size_t i = static_cast<std::size_t>(h) * width + w;
                out[0 * hw + i] = static_cast<double>(px[2]) / 255.0;
                out[1 * hw + i] = static_cast<double>(px[1]) / 255.0;
                out[2 * hw + i] = static_cast<double>(px[0]) / 255.0;
            }
    }
    return out;
}

Tensor load_mask_file(const std::string& path, int height, int width) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("unreadable mask file: " + path);
    cv::Mat resized;
    if (m.rows == height && m.cols == width)
        resized = m;
    else
        cv::resize(m, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    Tensor out({height, width});
    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
            out[static_cast<std::size_t>(h) * width + w] =
                resized.at<std::uint8_t>(h, w) > 127 ? 1.0 : 0.0;
    return out;
}

void save_grayscale_normalized(const std::string& path, const Tensor& map) {
    if (map.ndim() != 2) throw std::invalid_argument("save_grayscale_normalized: need [H,W]");
    const int height = map.dim(0), width = map.dim(1);
    const double lo = map.min(), hi = map.max();
    const double span = hi > lo ? hi - lo : 1.0;
    cv::Mat m(height, width, CV_8UC1);
    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w) {
            const double v = (map[static_cast<std::size_t>(h) * width + w] - lo) / span;
            m.at<std::uint8_t>(h, w) = static_cast<std::uint8_t>(v * 255.0 + 0.5);
        }
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write image: " + path);
}

void save_image_01(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3) throw std::invalid_argument("save_image_01: need [C,H,W]");
    const int channels = image.dim(0), height = image.dim(1), width = image.dim(2);
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    auto to_u8 = [](double v) {
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        return static_cast<std::uint8_t>(v * 255.0 + 0.5);
    };
    cv::Mat m;
    if (channels == 1) {
        m = cv::Mat(height, width, CV_8UC1);
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w)
                m.at<std::uint8_t>(h, w) = to_u8(image[static_cast<std::size_t>(h) * width + w]);
    } else if (channels == 3) {
        m = cv::Mat(height, width, CV_8UC3);
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w) {
                const std::size_t i = static_cast<std::size_t>(h) * width + w;
                m.at<cv::Vec3b>(h, w) =
                    cv::Vec3b(to_u8(image[2 * hw + i]), to_u8(image[1 * hw + i]), to_u8(image[i]));
            }
    } else {
        throw std::invalid_argument("save_image_01: channels must be 1 or 3");
    }
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write image: " + path);
}

namespace {
constexpr char kMapMagic[4] = {'I', 'G', 'D', 'H'};
}

void save_float_map(const std::string& path, const Tensor& map) {
    if (map.ndim() != 2) throw std::invalid_argument("save_float_map: need [H,W]");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kMapMagic, 4);
    const std::uint32_t h = static_cast<std::uint32_t>(map.dim(0));
    const std::uint32_t w = static_cast<std::uint32_t>(map.dim(1));
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    f.write(reinterpret_cast<const char*>(&w), sizeof(w));
    std::vector<float> buf(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) buf[i] = static_cast<float>(map[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(float) * buf.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor load_float_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open float map: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMapMagic, 4) != 0)
        throw std::runtime_error("not a float map container: " + path);
    std::uint32_t h = 0, w = 0;
    f.read(reinterpret_cast<char*>(&h), sizeof(h));
    f.read(reinterpret_cast<char*>(&w), sizeof(w));
    Tensor out({static_cast<int>(h), static_cast<int>(w)});
    std::vector<float> buf(out.size());
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(sizeof(float) * buf.size()));
    if (!f) throw std::runtime_error("truncated float map: " + path);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

}  // namespace igd
