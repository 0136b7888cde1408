#include "dermforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dermforge/errors.hpp"
#include "dermforge/image.hpp"
#include "dermforge/rng.hpp"
#include "dermforge/threading.hpp"

namespace dermforge {

namespace fs = std::filesystem;

int class_index(std::string_view dx_code) {
    for (int i = 0; i < kNumClasses; ++i)
        if (kClassCodes[i] == dx_code) return i;
    return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

const std::vector<std::string> kHeader = {"lesion_id", "image_id", "dx",          "dx_type",
                                          "age",       "sex",      "localization"};

}  // namespace

std::vector<MetadataRecord> load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected a header row");
    if (split_csv_line(line) != kHeader)
        throw ParseError(path + ": unexpected header, expected "
                         "lesion_id,image_id,dx,dx_type,age,sex,localization");

    std::vector<MetadataRecord> records;
    std::unordered_set<std::string> seen_ids;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != kHeader.size())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kHeader.size()) + " fields, got " +
                             std::to_string(fields.size()));
        MetadataRecord r;
        r.lesion_id = fields[0];
        r.image_id = fields[1];
        r.dx = class_index(fields[2]);
        if (r.dx < 0)
            throw ParseError(path + ": line " + std::to_string(line_no) + ": unknown dx \"" + fields[2] +
                             "\"");
        r.dx_type = fields[3];
        if (!fields[4].empty()) {
            try {
                size_t pos = 0;
                double age = std::stod(fields[4], &pos);
                if (pos != fields[4].size() || age < 0.0 || !std::isfinite(age))
                    throw std::invalid_argument("");
                r.age = age;
            } catch (const std::exception&) {
                throw ParseError(path + ": line " + std::to_string(line_no) + ": bad age \"" + fields[4] +
                                 "\"");
            }
        }
        r.sex = fields[5];
        r.localization = fields[6];
        if (!seen_ids.insert(r.image_id).second)
            throw ParseError(path + ": line " + std::to_string(line_no) + ": duplicate image_id \"" +
                             r.image_id + "\"");
        records.push_back(std::move(r));
    }
    return records;
}

SplitResult split(const std::vector<MetadataRecord>& records, double val_fraction, uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ArgumentError("split: val_fraction must be in (0,1)");
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.image_id);
    // sorting first makes the split depend only on the id set and the seed
    std::sort(ids.begin(), ids.end());
    Rng rng = Rng(seed).child(0x5b117, 0);
    rng.shuffle(ids);

    const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(ids.size()) * (1.0 - val_fraction)));
    SplitResult out;
    out.train_ids.assign(ids.begin(), ids.begin() + n_train);
    out.val_ids.assign(ids.begin() + n_train, ids.end());
    return out;
}

ClassWeights class_weights_for(const std::vector<MetadataRecord>&) {
    return ClassWeights::paper(kNvIndex);
}

Facet facet_from_string(const std::string& name) {
    if (name == "dx") return Facet::dx;
    if (name == "dx_type") return Facet::dx_type;
    if (name == "localization") return Facet::localization;
    if (name == "age_by_dx") return Facet::age_by_dx;
    throw ArgumentError("unknown facet \"" + name + "\" (expected dx|dx_type|localization|age_by_dx)");
}

int64_t CountTable::total() const {
    int64_t t = 0;
    for (const auto& [key, count] : rows) t += count;
    return t;
}

std::string CountTable::to_csv() const {
    std::ostringstream os;
    os << "value,count\n";
    for (const auto& [key, count] : rows) os << key << "," << count << "\n";
    return os.str();
}

CountTable tabulate(const std::vector<MetadataRecord>& records, Facet facet) {
    std::map<std::string, int64_t> counts;
    for (const auto& r : records) {
        switch (facet) {
            case Facet::dx:
                ++counts[std::string(kClassCodes[r.dx])];
                break;
            case Facet::dx_type:
                ++counts[r.dx_type + "/" + std::string(kClassCodes[r.dx])];
                break;
            case Facet::localization:
                ++counts[r.localization];
                break;
            case Facet::age_by_dx: {
                if (!r.age) break;
                const int lo = static_cast<int>(std::floor(*r.age / 5.0)) * 5;
                ++counts[std::string(kClassCodes[r.dx]) + "/" + std::to_string(lo) + "-" +
                         std::to_string(lo + 5)];
                break;
            }
        }
    }
    CountTable table;
    table.rows.assign(counts.begin(), counts.end());
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return table;
}

NormStats compute_norm_stats(const std::vector<Sample>& samples, const std::vector<int>& indices) {
    if (indices.empty()) throw ArgumentError("compute_norm_stats: no samples");
    NormStats norm;
    const size_t plane = samples[indices[0]].image.size() / 3;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int idx : indices) {
            const float* p = samples[idx].image.data() + c * plane;
            for (size_t i = 0; i < plane; ++i) sum += p[i];
        }
        const double mean = sum / (static_cast<double>(indices.size()) * plane);
        double sq = 0.0;
        for (int idx : indices) {
            const float* p = samples[idx].image.data() + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                const double d = p[i] - mean;
                sq += d * d;
            }
        }
        const double var = sq / (static_cast<double>(indices.size()) * plane);
        norm.mean[c] = static_cast<float>(mean);
        norm.stddev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return norm;
}

void standardize(Tensor<float>& image, const NormStats& norm) {
    const size_t plane = image.size() / 3;
    float* p = image.data();
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < plane; ++i)
            p[c * plane + i] = (p[c * plane + i] - norm.mean[c]) / norm.stddev[c];
}

namespace {

std::string find_image_file(const std::string& image_id, const std::vector<std::string>& image_dirs) {
    static const char* exts[] = {".jpg", ".jpeg", ".png", ".bmp"};
    for (const auto& dir : image_dirs) {
        for (const char* ext : exts) {
            fs::path p = fs::path(dir) / (image_id + ext);
            if (fs::exists(p)) return p.string();
        }
    }
    throw DecodeError("no image file found for id \"" + image_id + "\"");
}

Dataset finish_dataset(std::vector<Sample> samples, double val_fraction, uint64_t seed,
                       const std::vector<MetadataRecord>& records) {
    Dataset ds;
    ds.samples = std::move(samples);
    ds.split_seed = seed;
    ds.val_fraction = val_fraction;

    SplitResult sp = split(records, val_fraction, seed);
    std::unordered_map<std::string, int> pos;
    for (size_t i = 0; i < ds.samples.size(); ++i) pos[ds.samples[i].image_id] = static_cast<int>(i);
    for (const auto& id : sp.train_ids) ds.train_idx.push_back(pos.at(id));
    for (const auto& id : sp.val_ids) ds.val_idx.push_back(pos.at(id));

    ds.norm = compute_norm_stats(ds.samples, ds.train_idx);
    return ds;
}

}  // namespace

Dataset build_dataset(const std::string& metadata_path, const std::vector<std::string>& image_dirs,
                      double val_fraction, uint64_t seed) {
    auto records = load_metadata(metadata_path);
    if (records.empty()) throw ArgumentError("build_dataset: metadata lists no images");

    std::vector<Sample> samples(records.size());
    std::vector<std::string> errors(records.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
    for (int i = 0; i < static_cast<int>(records.size()); ++i) {
        try {
            Sample s;
            s.image = decode_and_resize(find_image_file(records[i].image_id, image_dirs));
            s.label = records[i].dx;
            s.image_id = records[i].image_id;
            samples[i] = std::move(s);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& err : errors)
        if (!err.empty()) throw DecodeError(err);

    return finish_dataset(std::move(samples), val_fraction, seed, records);
}

Dataset assemble_dataset(std::vector<Sample> samples, double val_fraction, uint64_t seed) {
    if (samples.empty()) throw ArgumentError("assemble_dataset: no samples");
    std::vector<MetadataRecord> records(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        records[i].image_id = samples[i].image_id;
        records[i].dx = samples[i].label;
    }
    return finish_dataset(std::move(samples), val_fraction, seed, records);
}

}  // namespace dermforge
