#include "dermforge/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dermforge/errors.hpp"

namespace dermforge {

Tensor<float> decode_and_resize(const std::string& image_path, int target) {
    cv::Mat bgr = cv::imread(image_path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError("cannot decode image: " + image_path);

    cv::Mat resized;
    if (bgr.rows == target && bgr.cols == target) {
        resized = bgr;
    } else {
        // INTER_AREA is the box filter for downscales, which is what the
        // 600x450 -> 28x28 path needs.
        cv::resize(bgr, resized, cv::Size(target, target), 0, 0, cv::INTER_AREA);
    }

    Tensor<float> out({3, target, target});
    float* data = out.data();
    const size_t plane = static_cast<size_t>(target) * target;
    for (int y = 0; y < target; ++y) {
        const cv::Vec3b* row = resized.ptr<cv::Vec3b>(y);
        for (int x = 0; x < target; ++x) {
            const size_t px = static_cast<size_t>(y) * target + x;
            // BGR -> RGB
            data[0 * plane + px] = static_cast<float>(row[x][2]) / 255.0f;
            data[1 * plane + px] = static_cast<float>(row[x][1]) / 255.0f;
            data[2 * plane + px] = static_cast<float>(row[x][0]) / 255.0f;
        }
    }
    return out;
}

}  // namespace dermforge
