#include "dermforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dermforge/rng.hpp"

namespace dermforge {

namespace {

struct BlobTemplate {
    float r, g, b;        // blob color
    double radius;        // disk radius in pixels
    double inner_radius;  // > 0 makes a ring
};

// Centered color/shape signatures, one per class. Distinct enough to be
// learnable through the augmentation pipeline.
const BlobTemplate kTemplates[kNumClasses] = {
    {0.95f, 0.15f, 0.15f, 5.5, 0.0},   // small red disk
    {0.15f, 0.95f, 0.15f, 7.5, 0.0},   // green disk
    {0.15f, 0.25f, 0.95f, 9.5, 0.0},   // blue disk
    {0.95f, 0.90f, 0.15f, 9.0, 4.0},   // yellow ring
    {0.90f, 0.15f, 0.90f, 11.5, 0.0},  // large magenta disk
    {0.15f, 0.90f, 0.90f, 10.5, 5.5},  // cyan ring
    {0.95f, 0.95f, 0.95f, 6.5, 3.0},   // small white ring
};

// Label mix mirroring the skew of the real data (fractions of 10015).
const double kImbalancedFractions[kNumClasses] = {
    327.0 / 10015, 514.0 / 10015, 1099.0 / 10015, 115.0 / 10015,
    1113.0 / 10015, 6705.0 / 10015, 142.0 / 10015,
};

Tensor<float> render_blob(int label, Rng& rng) {
    const BlobTemplate& t = kTemplates[label];
    const int side = 28;
    Tensor<float> img({3, side, side});

    const float background = static_cast<float>(rng.uniform(0.05, 0.18));
    const double cx = 13.5 + rng.uniform(-1.5, 1.5);
    const double cy = 13.5 + rng.uniform(-1.5, 1.5);
    const double radius = t.radius * rng.uniform(0.88, 1.12);
    const double inner = t.inner_radius * rng.uniform(0.88, 1.12);
    const float amplitude = static_cast<float>(rng.uniform(0.75, 1.0));

    float* data = img.data();
    const size_t plane = side * side;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            // soft 1px edge, carved center for rings
            double cover = std::clamp(radius - d + 0.5, 0.0, 1.0);
            if (inner > 0.0) cover *= std::clamp(d - inner + 0.5, 0.0, 1.0);
            const float m = amplitude * static_cast<float>(cover);
            const size_t px = static_cast<size_t>(y) * side + x;
            data[0 * plane + px] = background + m * (t.r - background);
            data[1 * plane + px] = background + m * (t.g - background);
            data[2 * plane + px] = background + m * (t.b - background);
        }
    }
    for (size_t i = 0; i < img.size(); ++i) {
        const float noisy = img[i] + static_cast<float>(rng.normal(0.0, 0.03));
        img[i] = std::clamp(noisy, 0.0f, 1.0f);
    }
    return img;
}

}  // namespace

std::vector<Sample> make_blob_samples(int count, uint64_t seed, bool imbalanced) {
    Rng rng = Rng(seed).child(0xb10b, 0);
    std::vector<Sample> samples;
    samples.reserve(count);
    for (int i = 0; i < count; ++i) {
        int label;
        if (imbalanced) {
            const double u = rng.next_double();
            double acc = 0.0;
            label = kNumClasses - 1;
            for (int c = 0; c < kNumClasses; ++c) {
                acc += kImbalancedFractions[c];
                if (u < acc) {
                    label = c;
                    break;
                }
            }
        } else {
            label = i % kNumClasses;
        }
        Sample s;
        Rng sample_rng = rng.child(static_cast<uint64_t>(i), static_cast<uint64_t>(label));
        s.image = render_blob(label, sample_rng);
        s.label = label;
        char id[32];
        std::snprintf(id, sizeof(id), "SYN_%07d", i);
        s.image_id = id;
        samples.push_back(std::move(s));
    }
    return samples;
}

Dataset make_blob_dataset(int count, uint64_t seed, bool imbalanced, double val_fraction) {
    return assemble_dataset(make_blob_samples(count, seed, imbalanced), val_fraction, seed);
}

std::string synthetic_metadata_csv(uint64_t seed) {
    // published per-class image counts of the 10015-image corpus
    const int counts[kNumClasses] = {327, 514, 1099, 115, 1113, 6705, 142};
    const char* dx_types[] = {"histo", "follow_up", "consensus", "confocal"};
    const char* sites[] = {"back",  "lower extremity", "trunk", "upper extremity", "abdomen",
                           "face",  "chest",           "foot",  "unknown",         "neck",
                           "scalp", "hand",            "ear",   "genital",         "acral"};
    const char* sexes[] = {"male", "female", "unknown"};

    Rng rng = Rng(seed).child(0x3e7a, 0);
    std::ostringstream os;
    os << "lesion_id,image_id,dx,dx_type,age,sex,localization\n";
    int image_no = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < counts[c]; ++i) {
            char lesion[32], image[32];
            std::snprintf(lesion, sizeof(lesion), "HAM_%07d", image_no / 2);
            std::snprintf(image, sizeof(image), "ISIC_%07d", 24306 + image_no);
            ++image_no;
            // nv mostly follow-up confirmed, the rest mostly histo
            const char* dx_type =
                c == kNvIndex ? (rng.next_double() < 0.75 ? "follow_up" : dx_types[rng.bounded(4)])
                              : (rng.next_double() < 0.80 ? "histo" : dx_types[rng.bounded(4)]);
            std::string age;
            if (rng.next_double() < 0.99) {
                const int a = 5 * static_cast<int>(std::clamp(rng.normal(10.0, 3.0), 0.0, 17.0));
                age = std::to_string(a) + ".0";
            }
            os << lesion << "," << image << "," << kClassCodes[c] << "," << dx_type << "," << age << ","
               << sexes[rng.bounded(3)] << "," << sites[rng.bounded(15)] << "\n";
        }
    }
    return os.str();
}

}  // namespace dermforge
