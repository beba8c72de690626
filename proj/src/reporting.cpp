#include "tabsynth/reporting.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tabsynth/error.hpp"
#include "tabsynth/rng.hpp"

namespace tabsynth::report {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

std::string format_value(double v, int decimals) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, v);
    return buffer;
}

} // namespace

// ------------------------------------------------------------------ theme

const Theme& theme() {
    static const Theme t;
    return t;
}

Rgb ramp_color(double v) {
    const double t = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    const Theme& th = theme();
    const auto mix = [t](std::uint8_t lo, std::uint8_t hi) {
        return static_cast<std::uint8_t>(
            std::lround(static_cast<double>(lo) +
                        t * (static_cast<double>(hi) - static_cast<double>(lo))));
    };
    return Rgb{mix(th.ramp_low.r, th.ramp_high.r), mix(th.ramp_low.g, th.ramp_high.g),
               mix(th.ramp_low.b, th.ramp_high.b)};
}

// ------------------------------------------------------------------- font

namespace {

// 5x7 glyphs, one byte per row, low five bits used (bit 4 = leftmost).
using Glyph = std::array<std::uint8_t, 7>;

const Glyph* find_glyph(char raw) {
    static const std::map<char, Glyph> table = {
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'|', {0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
        {'*', {0x00, 0x04, 0x15, 0x0E, 0x15, 0x04, 0x00}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    const char c =
        static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    const auto it = table.find(c);
    return it == table.end() ? nullptr : &it->second;
}

constexpr int kGlyphWidth = 5;
constexpr int kGlyphHeight = 7;
constexpr int kGlyphAdvance = 6; // one blank column between characters

} // namespace

// ------------------------------------------------------------------ canvas

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::ConfigInvalid, "image dimensions must be positive");
    }
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

void Image::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width_ + x);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
}

Rgb Image::get(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) {
        throw Error(ErrorCode::DimensionMismatch, "pixel read outside the image");
    }
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width_ + x);
    return Rgb{pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::fill_rect(int x, int y, int w, int h, Rgb c) {
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
}

void Image::frame_rect(int x, int y, int w, int h, Rgb c) {
    for (int xx = x; xx < x + w; ++xx) {
        set(xx, y, c);
        set(xx, y + h - 1, c);
    }
    for (int yy = y; yy < y + h; ++yy) {
        set(x, yy, c);
        set(x + w - 1, yy, c);
    }
}

void Image::line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Image::text(int x, int y, const std::string& s, Rgb c, int scale) {
    int cx = x;
    for (const char ch : s) {
        if (const Glyph* glyph = find_glyph(ch)) {
            for (int row = 0; row < kGlyphHeight; ++row) {
                for (int col = 0; col < kGlyphWidth; ++col) {
                    if (((*glyph)[row] >> (kGlyphWidth - 1 - col)) & 1) {
                        fill_rect(cx + col * scale, y + row * scale, scale, scale, c);
                    }
                }
            }
        }
        cx += kGlyphAdvance * scale;
    }
}

int Image::text_width(const std::string& s, int scale) {
    if (s.empty()) return 0;
    return (static_cast<int>(s.size()) * kGlyphAdvance - 1) * scale;
}

int Image::text_height(int scale) { return kGlyphHeight * scale; }

// -------------------------------------------------------------------- png

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size,
                    std::uint32_t crc = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t n = 0; n < 256; ++n) {
            std::uint32_t c = n;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            }
            t[n] = c;
        }
        return t;
    }();
    for (std::size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    }
    return crc;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
    std::uint32_t a = 1, b = 0;
    for (const std::uint8_t byte : data) {
        a = (a + byte) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[5],
                  const std::vector<std::uint8_t>& data) {
    append_be32(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    append_be32(out, crc32(body.data(), body.size()) ^ 0xFFFFFFFFu);
}

} // namespace

void write_png(const Image& image, const std::string& path) {
    // Raw scanlines, each preceded by filter byte 0 (no filtering).
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(image.height()) *
                (1 + 3 * static_cast<std::size_t>(image.width())));
    const auto& px = image.pixels();
    for (int y = 0; y < image.height(); ++y) {
        raw.push_back(0);
        const std::size_t offset = 3 * static_cast<std::size_t>(y) * image.width();
        raw.insert(raw.end(), px.begin() + offset,
                   px.begin() + offset + 3 * static_cast<std::size_t>(image.width()));
    }

    // zlib wrapper around stored (uncompressed) deflate blocks.
    std::vector<std::uint8_t> idat{0x78, 0x01};
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
        const bool final = pos + len == raw.size();
        idat.push_back(final ? 1 : 0);
        idat.push_back(static_cast<std::uint8_t>(len & 0xFF));
        idat.push_back(static_cast<std::uint8_t>(len >> 8));
        idat.push_back(static_cast<std::uint8_t>(~len & 0xFF));
        idat.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
        idat.insert(idat.end(), raw.begin() + pos, raw.begin() + pos + len);
        pos += len;
    }
    append_be32(idat, adler32(raw));

    std::vector<std::uint8_t> ihdr;
    append_be32(ihdr, static_cast<std::uint32_t>(image.width()));
    append_be32(ihdr, static_cast<std::uint32_t>(image.height()));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // truecolor
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter
    ihdr.push_back(0); // no interlace

    std::vector<std::uint8_t> file{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", idat);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot write: " + path);
    out.write(reinterpret_cast<const char*>(file.data()),
              static_cast<std::streamsize>(file.size()));
    if (!out) throw Error(ErrorCode::MissingFile, "short write: " + path);
}

// ------------------------------------------------------------- figure data

const std::vector<std::string>& heatmap_metrics() {
    static const std::vector<std::string> metrics = {"accuracy", "precision",
                                                     "recall", "f1", "auc"};
    return metrics;
}

const std::vector<std::string>& heatmap_columns() {
    static const std::vector<std::string> columns = [] {
        std::vector<std::string> c;
        for (const auto& metric : heatmap_metrics()) {
            c.push_back(metric + " ts-tr");
            c.push_back(metric + " tr-ts");
        }
        return c;
    }();
    return columns;
}

Eigen::MatrixXd heatmap_values(const eval::EvaluationReport& report,
                               const std::string& classifier) {
    const bool known = std::any_of(
        report.plan.classifiers.begin(), report.plan.classifiers.end(),
        [&](const clf::ClassifierSpec& spec) { return spec.kind == classifier; });
    if (!known) {
        throw Error(ErrorCode::UnknownClassifier,
                    "classifier '" + classifier + "' is not part of the report");
    }
    const auto& metrics = heatmap_metrics();
    Mat values(static_cast<Eigen::Index>(report.plan.generators.size()),
               static_cast<Eigen::Index>(2 * metrics.size()));
    for (std::size_t g = 0; g < report.plan.generators.size(); ++g) {
        const auto& by_protocol = report.utility_aggregates
                                      .at(report.plan.generators[g].name)
                                      .at(classifier);
        for (std::size_t m = 0; m < metrics.size(); ++m) {
            int column = static_cast<int>(2 * m);
            for (const char* protocol : {"ts_tr", "tr_ts"}) {
                const auto& cell = by_protocol.at(protocol);
                values(static_cast<Eigen::Index>(g), column) =
                    cell.all_failed ? std::numeric_limits<double>::quiet_NaN()
                                    : cell.metrics.at(metrics[m]).mean;
                ++column;
            }
        }
    }
    return values;
}

metrics::ConfusionCounts summed_confusion(const eval::EvaluationReport& report,
                                          const std::string& generator,
                                          const std::string& classifier,
                                          const std::string& protocol) {
    if (protocol != "tr_ts" && protocol != "ts_tr") {
        throw Error(ErrorCode::ConfigInvalid,
                    "protocol must be tr_ts or ts_tr, got '" + protocol + "'");
    }
    metrics::ConfusionCounts total;
    bool any = false;
    for (const auto& fold : report.folds) {
        const auto git = fold.by_generator.find(generator);
        if (git == fold.by_generator.end()) {
            throw Error(ErrorCode::MissingCell,
                        "generator '" + generator + "' missing from fold " +
                            std::to_string(fold.fold_index));
        }
        const auto cit = git->second.by_classifier.find(classifier);
        if (cit == git->second.by_classifier.end()) {
            throw Error(ErrorCode::MissingCell,
                        "classifier '" + classifier + "' missing from fold " +
                            std::to_string(fold.fold_index));
        }
        const eval::UtilityCell& cell =
            protocol == "tr_ts" ? cit->second.tr_ts : cit->second.ts_tr;
        if (cell.failed) continue;
        total.tp += cell.confusion.tp;
        total.fp += cell.confusion.fp;
        total.fn += cell.confusion.fn;
        total.tn += cell.confusion.tn;
        any = true;
    }
    if (!any) {
        throw Error(ErrorCode::MissingCell,
                    "no fold produced counts for (" + generator + ", " +
                        classifier + ", " + protocol + ")");
    }
    return total;
}

FeatureMeanSummary feature_mean_summary(const TabularDataset& real,
                                        const TabularDataset& synth) {
    if (!(real.schema == synth.schema)) {
        throw Error(ErrorCode::SchemaMismatch,
                    "feature-mean comparison needs identical schemas");
    }
    if (real.rows() < 1 || synth.rows() < 1) {
        throw Error(ErrorCode::MalformedData,
                    "feature-mean comparison needs nonempty datasets");
    }
    FeatureMeanSummary summary;
    summary.real_means = real.features.colwise().mean();
    summary.synth_means = synth.features.colwise().mean();
    summary.abs_diff = (summary.real_means - summary.synth_means).cwiseAbs();
    summary.abs_diff.maxCoeff(&summary.max_index);
    return summary;
}

std::vector<std::string> panel_series(const gen::TrainingTrace& trace) {
    std::vector<std::string> names;
    for (const auto& series : trace.series()) {
        // The gradient-penalty term is a regularizer diagnostic; the loss
        // panels chart the adversarial losses themselves.
        if (series.name == "penalty") continue;
        names.push_back(series.name);
    }
    return names;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& features) {
    const Eigen::Index d = features.cols();
    const Eigen::Index n = features.rows();
    if (n < 2) {
        throw Error(ErrorCode::TooFewSamples,
                    "correlation needs at least two rows");
    }
    const Mat centered = features.rowwise() - features.colwise().mean();
    Vec scale(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        scale(j) = std::sqrt(centered.col(j).squaredNorm());
    }
    Mat corr = Mat::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (scale(i) < 1e-12) continue; // constant column: 0 by convention
        for (Eigen::Index j = 0; j < d; ++j) {
            if (scale(j) < 1e-12) continue;
            corr(i, j) = std::clamp(
                centered.col(i).dot(centered.col(j)) / (scale(i) * scale(j)),
                -1.0, 1.0);
        }
    }
    return corr;
}

Eigen::VectorXi kmeans_labels(const Eigen::MatrixXd& features, int k,
                              std::uint64_t seed) {
    const Eigen::Index n = features.rows();
    if (k < 2) {
        throw Error(ErrorCode::ConfigInvalid, "k-means needs k >= 2");
    }
    if (n < k) {
        throw Error(ErrorCode::TooFewSamples,
                    "k-means needs at least k rows, got " + std::to_string(n));
    }
    // Seeded draw of k distinct starting rows.
    Rng rng(seed);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<Eigen::Index>(
            i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i))));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }
    Mat centers(k, features.cols());
    for (int c = 0; c < k; ++c) {
        centers.row(c) = features.row(order[static_cast<std::size_t>(c)]);
    }

    Eigen::VectorXi labels = Eigen::VectorXi::Constant(n, -1);
    for (int iteration = 0; iteration < 100; ++iteration) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dist =
                    (features.row(i) - centers.row(c)).squaredNorm();
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c;
                }
            }
            if (labels(i) != best) {
                labels(i) = best;
                changed = true;
            }
        }
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
            Vec sum = Vec::Zero(features.cols());
            long count = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (labels(i) == c) {
                    sum += features.row(i).transpose();
                    ++count;
                }
            }
            if (count > 0) {
                centers.row(c) = (sum / static_cast<double>(count)).transpose();
            } else {
                // An emptied cluster restarts at the row farthest from its
                // current center.
                Eigen::Index farthest = 0;
                double worst = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double dist =
                        (features.row(i) - centers.row(labels(i))).squaredNorm();
                    if (dist > worst) {
                        worst = dist;
                        farthest = i;
                    }
                }
                centers.row(c) = features.row(farthest);
            }
        }
    }
    return labels;
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& features, int components) {
    const Eigen::Index d = features.cols();
    const Eigen::Index n = features.rows();
    if (components < 1 || components > d) {
        throw Error(ErrorCode::ConfigInvalid,
                    "component count must be in [1, feature count]");
    }
    if (n < 2) {
        throw Error(ErrorCode::TooFewSamples, "projection needs at least 2 rows");
    }
    const Mat centered = features.rowwise() - features.colwise().mean();
    const Mat covariance =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Mat> solver(covariance);
    Mat basis(d, components);
    for (int c = 0; c < components; ++c) {
        Vec axis = solver.eigenvectors().col(d - 1 - c);
        // Fix the sign so the largest-magnitude loading is positive.
        Eigen::Index pivot = 0;
        axis.cwiseAbs().maxCoeff(&pivot);
        if (axis(pivot) < 0) axis = -axis;
        basis.col(c) = axis;
    }
    return centered * basis;
}

// -------------------------------------------------------------- renderers

namespace {

constexpr int kMargin = 8;
constexpr int kLineHeight = 10; // 7 px glyphs + 3 px leading

// Annotation color readable against the ramp.
Rgb annotation_color(double v) {
    return (std::isfinite(v) && v > 0.55) ? theme().inverse_text : theme().text;
}

void centered_text(Image& image, int x, int y, int w, int h,
                   const std::string& s, Rgb c) {
    image.text(x + (w - Image::text_width(s)) / 2,
               y + (h - Image::text_height()) / 2, s, c);
}

// One 2x2 confusion panel; returns its width.
int draw_confusion_panel(Image& image, int x, int y,
                         const metrics::ConfusionCounts& counts,
                         const std::string& caption) {
    constexpr int cell_w = 66, cell_h = 34;
    const double total = std::max<long>(1, counts.total());
    const std::array<std::array<std::pair<const char*, long>, 2>, 2> cells{{
        {{{"tp", counts.tp}, {"fn", counts.fn}}},
        {{{"fp", counts.fp}, {"tn", counts.tn}}},
    }};
    image.text(x, y, caption, theme().text);
    const int top = y + kLineHeight + 2;
    for (int row = 0; row < 2; ++row) {
        for (int col = 0; col < 2; ++col) {
            const auto& [label, count] = cells[row][col];
            const double share = static_cast<double>(count) / total;
            const int cx = x + col * cell_w;
            const int cy = top + row * cell_h;
            image.fill_rect(cx, cy, cell_w, cell_h, ramp_color(share));
            image.frame_rect(cx, cy, cell_w, cell_h, theme().frame);
            centered_text(image, cx, cy, cell_w, cell_h,
                          std::string(label) + "=" + std::to_string(count),
                          annotation_color(share));
        }
    }
    return 2 * cell_w;
}

} // namespace

Image render_metric_heatmap(const eval::EvaluationReport& report,
                            const std::string& classifier) {
    const Mat values = heatmap_values(report, classifier);
    const auto& columns = heatmap_columns();
    const int rows = static_cast<int>(values.rows());
    const int cols = static_cast<int>(values.cols());

    constexpr int cell_w = 58, cell_h = 24;
    int label_w = 0;
    for (const auto& entry : report.plan.generators) {
        label_w = std::max(label_w, Image::text_width(entry.name));
    }
    const int left = kMargin + label_w + 6;
    const int top = kMargin + 3 * kLineHeight; // title + two header lines
    Image image(left + cols * cell_w + kMargin,
                top + rows * cell_h + kMargin, theme().background);

    image.text(kMargin, kMargin, "classifier: " + classifier, theme().text);
    for (int c = 0; c < cols; ++c) {
        const auto split = columns[static_cast<std::size_t>(c)].find(' ');
        const std::string metric = columns[static_cast<std::size_t>(c)].substr(0, split);
        const std::string protocol = columns[static_cast<std::size_t>(c)].substr(split + 1);
        if (c % 2 == 0) {
            image.text(left + c * cell_w + 2, kMargin + kLineHeight, metric,
                       theme().text);
        }
        image.text(left + c * cell_w + 2, kMargin + 2 * kLineHeight, protocol,
                   theme().text);
    }
    for (int r = 0; r < rows; ++r) {
        image.text(kMargin, top + r * cell_h + (cell_h - Image::text_height()) / 2,
                   report.plan.generators[static_cast<std::size_t>(r)].name,
                   theme().text);
        for (int c = 0; c < cols; ++c) {
            const double v = values(r, c);
            const int cx = left + c * cell_w;
            const int cy = top + r * cell_h;
            image.fill_rect(cx, cy, cell_w, cell_h,
                            std::isfinite(v) ? ramp_color(v) : theme().muted);
            image.frame_rect(cx, cy, cell_w, cell_h, theme().frame);
            centered_text(image, cx, cy, cell_w, cell_h,
                          std::isfinite(v) ? format_value(v, 2) : "n/a",
                          annotation_color(v));
        }
    }
    return image;
}

Image render_confusion(const eval::EvaluationReport& report,
                       const std::string& generator,
                       const std::string& classifier,
                       const std::string& protocol) {
    const bool both = protocol == "both";
    if (!both && protocol != "tr_ts" && protocol != "ts_tr") {
        throw Error(ErrorCode::ConfigInvalid,
                    "protocol must be tr_ts, ts_tr, or both");
    }
    const std::vector<std::string> shown =
        both ? std::vector<std::string>{"tr_ts", "ts_tr"}
             : std::vector<std::string>{protocol};
    std::vector<metrics::ConfusionCounts> counts;
    for (const auto& p : shown) {
        counts.push_back(summed_confusion(report, generator, classifier, p));
    }

    constexpr int panel_w = 132, panel_h = 2 * 34 + kLineHeight + 2, gap = 16;
    const int width = kMargin * 2 +
                      static_cast<int>(shown.size()) * panel_w +
                      (static_cast<int>(shown.size()) - 1) * gap;
    Image image(width, kMargin * 2 + kLineHeight + 4 + panel_h,
                theme().background);
    image.text(kMargin, kMargin, generator + " / " + classifier, theme().text);
    int x = kMargin;
    for (std::size_t i = 0; i < shown.size(); ++i) {
        draw_confusion_panel(image, x, kMargin + kLineHeight + 4, counts[i],
                             shown[i] == "tr_ts" ? "tr-ts" : "ts-tr");
        x += panel_w + gap;
    }
    return image;
}

Image render_feature_mean_comparison(const TabularDataset& real,
                                     const TabularDataset& synth) {
    const auto summary = feature_mean_summary(real, synth);
    const int d = static_cast<int>(summary.real_means.size());

    constexpr int cell_w = 22, cell_h = 20;
    const int label_w = std::max({Image::text_width("real"),
                                  Image::text_width("synth"),
                                  Image::text_width("|diff|")});
    const int left = kMargin + label_w + 6;
    const int top = kMargin + kLineHeight + 4;
    const int caption_y = top + 3 * cell_h + 6;
    Image image(std::max(left + d * cell_w + kMargin, 320),
                caption_y + 2 * kLineHeight + kMargin, theme().background);

    image.text(kMargin, kMargin, "feature means: real vs synthetic",
               theme().text);
    const std::array<std::pair<const char*, const Vec*>, 3> strips{{
        {"real", &summary.real_means},
        {"synth", &summary.synth_means},
        {"|diff|", &summary.abs_diff},
    }};
    for (int s = 0; s < 3; ++s) {
        const auto& [name, vec] = strips[static_cast<std::size_t>(s)];
        const int cy = top + s * cell_h;
        image.text(kMargin, cy + (cell_h - Image::text_height()) / 2, name,
                   theme().text);
        for (int j = 0; j < d; ++j) {
            const int cx = left + j * cell_w;
            image.fill_rect(cx, cy, cell_w, cell_h, ramp_color((*vec)(j)));
            image.frame_rect(cx, cy, cell_w, cell_h, theme().frame);
        }
    }
    // Tick marks every few features keep wide strips readable.
    for (int j = 0; j < d; j += std::max(1, d / 8)) {
        image.text(left + j * cell_w + 2, top + 3 * cell_h + 2,
                   std::to_string(j), theme().text);
    }
    const std::string worst =
        real.schema.names[static_cast<std::size_t>(summary.max_index)];
    image.text(kMargin, caption_y + kLineHeight,
               "max |diff| at " + worst + " = " +
                   format_value(summary.abs_diff(summary.max_index), 3),
               theme().text);
    return image;
}

Image render_loss_curves(
    const std::vector<std::pair<std::string, gen::TrainingTrace>>& traces) {
    struct Panel {
        std::string name;
        std::vector<const gen::TrainingTrace::Series*> series;
    };
    std::vector<Panel> panels;
    for (const auto& [name, trace] : traces) {
        Panel panel{name, {}};
        for (const auto& series_name : panel_series(trace)) {
            panel.series.push_back(trace.find(series_name));
        }
        if (!panel.series.empty()) panels.push_back(std::move(panel));
    }
    if (panels.empty()) {
        throw Error(ErrorCode::EmptyTrace, "no loss series to plot");
    }

    constexpr int plot_w = 330, plot_h = 96;
    const int panel_h = kLineHeight + plot_h + kLineHeight + 10;
    const int left = kMargin + 46; // room for y-axis extremes
    Image image(left + plot_w + kMargin,
                kMargin + static_cast<int>(panels.size()) * panel_h,
                theme().background);

    int y = kMargin;
    for (const auto& panel : panels) {
        // Panel header: model name plus a legend entry per series.
        image.text(kMargin, y, panel.name, theme().text);
        int lx = kMargin + Image::text_width(panel.name) + 12;
        for (std::size_t s = 0; s < panel.series.size(); ++s) {
            const Rgb color = theme().series[s % theme().series.size()];
            image.fill_rect(lx, y + 1, 6, 6, color);
            image.text(lx + 9, y, panel.series[s]->name, theme().text);
            lx += 9 + Image::text_width(panel.series[s]->name) + 12;
        }
        const int py = y + kLineHeight + 2;

        long step_lo = std::numeric_limits<long>::max(), step_hi = 0;
        double v_lo = std::numeric_limits<double>::infinity(), v_hi = -v_lo;
        for (const auto* series : panel.series) {
            for (const auto& [step, value] : series->points) {
                step_lo = std::min(step_lo, step);
                step_hi = std::max(step_hi, step);
                if (std::isfinite(value)) {
                    v_lo = std::min(v_lo, value);
                    v_hi = std::max(v_hi, value);
                }
            }
        }
        if (!std::isfinite(v_lo)) {
            v_lo = 0;
            v_hi = 1;
        }
        if (v_hi - v_lo < 1e-12) {
            v_lo -= 1;
            v_hi += 1;
        }
        const double pad = 0.05 * (v_hi - v_lo);
        v_lo -= pad;
        v_hi += pad;

        image.frame_rect(left, py, plot_w, plot_h, theme().frame);
        image.text(kMargin, py, format_value(v_hi, 2), theme().text);
        image.text(kMargin, py + plot_h - Image::text_height(),
                   format_value(v_lo, 2), theme().text);
        const auto to_x = [&](long step) {
            const double span = std::max<double>(1, step_hi - step_lo);
            return left + 1 +
                   static_cast<int>(std::lround((step - step_lo) / span *
                                                (plot_w - 3)));
        };
        const auto to_y = [&](double value) {
            return py + 1 +
                   static_cast<int>(std::lround((v_hi - value) / (v_hi - v_lo) *
                                                (plot_h - 3)));
        };
        for (std::size_t s = 0; s < panel.series.size(); ++s) {
            const Rgb color = theme().series[s % theme().series.size()];
            const auto& points = panel.series[s]->points;
            for (std::size_t i = 0; i + 1 < points.size(); ++i) {
                if (!std::isfinite(points[i].second) ||
                    !std::isfinite(points[i + 1].second)) {
                    continue;
                }
                image.line(to_x(points[i].first), to_y(points[i].second),
                           to_x(points[i + 1].first), to_y(points[i + 1].second),
                           color);
            }
            if (points.size() == 1 && std::isfinite(points[0].second)) {
                image.fill_rect(to_x(points[0].first) - 1,
                                to_y(points[0].second) - 1, 3, 3, color);
            }
        }
        image.text(left, py + plot_h + 3, "step " + std::to_string(step_lo) +
                                              " to " + std::to_string(step_hi),
                   theme().text);
        y += panel_h;
    }
    return image;
}

Image render_correlation_heatmap(const TabularDataset& dataset,
                                 const std::string& title) {
    const Mat corr = correlation_matrix(dataset.features);
    const int d = static_cast<int>(corr.rows());
    const int cell = std::clamp(320 / std::max(1, d), 6, 26);
    const int left = kMargin + 26;
    const int top = kMargin + kLineHeight + 4;
    Image image(std::max(left + d * cell + kMargin, 300),
                top + d * cell + kLineHeight + kMargin, theme().background);

    const std::string heading =
        title.empty() ? std::string("correlation") : "correlation: " + title;
    image.text(kMargin, kMargin, heading, theme().text);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            // Map [-1, 1] monotonically onto the ramp.
            image.fill_rect(left + j * cell, top + i * cell, cell, cell,
                            ramp_color((corr(i, j) + 1.0) / 2.0));
        }
    }
    image.frame_rect(left, top, d * cell, d * cell, theme().frame);
    image.text(left, top + d * cell + 3,
               "d=" + std::to_string(d) + "  light=-1 dark=+1", theme().text);
    return image;
}

Image render_cluster_plot(const TabularDataset& dataset, int n_clusters,
                          std::uint64_t seed, const std::string& title) {
    const Eigen::VectorXi labels =
        kmeans_labels(dataset.features, n_clusters, seed);
    const Mat projected =
        pca_project(dataset.features,
                    static_cast<int>(std::min<Eigen::Index>(2, dataset.cols())));
    const int n = static_cast<int>(projected.rows());

    constexpr int plot_w = 320, plot_h = 240;
    const int top = kMargin + kLineHeight + 4;
    Image image(kMargin * 2 + plot_w, top + plot_h + 2 * kLineHeight + kMargin,
                theme().background);
    const std::string heading =
        title.empty() ? std::string("clusters") : "clusters: " + title;
    image.text(kMargin, kMargin,
               heading + " (k=" + std::to_string(n_clusters) + ")",
               theme().text);

    Vec x = projected.col(0);
    Vec y = projected.cols() > 1 ? Vec(projected.col(1)) : Vec(Vec::Zero(n));
    const double x_lo = x.minCoeff(), x_hi = x.maxCoeff();
    const double y_lo = y.minCoeff(), y_hi = y.maxCoeff();
    const double x_span = std::max(1e-12, x_hi - x_lo);
    const double y_span = std::max(1e-12, y_hi - y_lo);
    image.frame_rect(kMargin, top, plot_w, plot_h, theme().frame);
    for (int i = 0; i < n; ++i) {
        const int px = kMargin + 4 +
                       static_cast<int>(std::lround((x(i) - x_lo) / x_span *
                                                    (plot_w - 9)));
        const int py = top + 4 +
                       static_cast<int>(std::lround((y_hi - y(i)) / y_span *
                                                    (plot_h - 9)));
        const Rgb color =
            theme().series[static_cast<std::size_t>(labels(i)) %
                           theme().series.size()];
        image.fill_rect(px - 1, py - 1, 3, 3, color);
    }
    image.text(kMargin, top + plot_h + 3,
               "k-means over a 2-d principal-component projection",
               theme().text);
    return image;
}

// ----------------------------------------------------------------- bundle

nlohmann::json ManifestEntry::to_json() const {
    return nlohmann::json{{"filename", filename}, {"kind", kind},
                          {"source", source}};
}

nlohmann::json ReportBundle::manifest_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& entry : entries) list.push_back(entry.to_json());
    return nlohmann::json{{"directory", directory}, {"entries", list}};
}

ReportBundle render_all(const FigureInputs& inputs, const std::string& out_dir) {
    if (inputs.report == nullptr) {
        throw Error(ErrorCode::ConfigInvalid, "figure inputs need a report");
    }
    const eval::EvaluationReport& report = *inputs.report;

    ReportBundle bundle;
    bundle.directory =
        (std::filesystem::path(out_dir) / "figures").string();
    std::filesystem::create_directories(bundle.directory);
    const auto save = [&](const Image& image, const std::string& filename,
                          const std::string& kind, nlohmann::json source) {
        write_png(image, bundle.directory + "/" + filename);
        bundle.entries.push_back(
            ManifestEntry{filename, kind, std::move(source)});
    };

    for (const auto& spec : report.plan.classifiers) {
        save(render_metric_heatmap(report, spec.kind),
             "heatmap_" + spec.kind + ".png", "metric_heatmap",
             {{"classifier", spec.kind}});
    }
    for (const auto& entry : report.plan.generators) {
        for (const auto& spec : report.plan.classifiers) {
            for (const char* protocol : {"tr_ts", "ts_tr"}) {
                try {
                    save(render_confusion(report, entry.name, spec.kind,
                                          protocol),
                         "confusion_" + entry.name + "_" + spec.kind + "_" +
                             protocol + ".png",
                         "confusion",
                         {{"generator", entry.name},
                          {"classifier", spec.kind},
                          {"protocol", protocol}});
                } catch (const Error& e) {
                    // Cells that failed on every fold have nothing to draw.
                    if (e.code() != ErrorCode::MissingCell) throw;
                }
            }
        }
    }
    if (inputs.real != nullptr) {
        for (const auto& [name, synth] : inputs.synthetic) {
            save(render_feature_mean_comparison(*inputs.real, synth),
                 "feature_means_" + name + ".png", "feature_means",
                 {{"generator", name}});
        }
        save(render_correlation_heatmap(*inputs.real, "real"),
             "correlation_real.png", "correlation", {{"which", "real"}});
        if (inputs.real->rows() >= inputs.cluster_count) {
            save(render_cluster_plot(*inputs.real, inputs.cluster_count,
                                     inputs.seed, "real"),
                 "clusters_real.png", "clusters", {{"which", "real"}});
        }
    }
    for (const auto& [name, synth] : inputs.synthetic) {
        save(render_correlation_heatmap(synth, name),
             "correlation_" + name + ".png", "correlation", {{"which", name}});
        if (synth.rows() >= inputs.cluster_count) {
            save(render_cluster_plot(synth, inputs.cluster_count, inputs.seed,
                                     name),
                 "clusters_" + name + ".png", "clusters", {{"which", name}});
        }
    }
    std::vector<std::pair<std::string, gen::TrainingTrace>> traces;
    if (!report.folds.empty()) {
        for (const auto& entry : report.plan.generators) {
            const auto it = report.folds[0].by_generator.find(entry.name);
            if (it != report.folds[0].by_generator.end() &&
                !it->second.trace.empty()) {
                traces.emplace_back(entry.name, it->second.trace);
            }
        }
    }
    if (!traces.empty()) {
        save(render_loss_curves(traces), "losses.png", "loss_curves",
             {{"fold", 0}});
    }

    std::sort(bundle.entries.begin(), bundle.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) {
                  return a.filename < b.filename;
              });
    std::ofstream manifest(bundle.directory + "/manifest.json");
    if (!manifest) {
        throw Error(ErrorCode::MissingFile,
                    "cannot write: " + bundle.directory + "/manifest.json");
    }
    manifest << bundle.manifest_json().dump(2) << '\n';
    return bundle;
}

} // namespace tabsynth::report
