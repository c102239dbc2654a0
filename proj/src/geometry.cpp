#include "emovid/geometry.hpp"

#include "emovid/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <sstream>

namespace emovid {

double alignment_angle(Point left_eye, Point right_eye) {
    const double dx = right_eye.x - left_eye.x;
    const double dy = right_eye.y - left_eye.y;
    if (dx == 0.0 && dy == 0.0)
        throw GeometryError("alignment_angle: coincident eye points");
    return std::atan2(dy, dx);
}

Point rotate_about(Point p, Point center, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double x = p.x - center.x, y = p.y - center.y;
    return {center.x + c * x - s * y, center.y + s * x + c * y};
}

Affine affine_inverse(const Affine& a) {
    const double det = a.m[0] * a.m[4] - a.m[1] * a.m[3];
    if (det == 0.0)
        throw GeometryError("affine_inverse: singular transform");
    Affine inv;
    inv.m[0] = a.m[4] / det;
    inv.m[1] = -a.m[1] / det;
    inv.m[3] = -a.m[3] / det;
    inv.m[4] = a.m[0] / det;
    inv.m[2] = -(inv.m[0] * a.m[2] + inv.m[1] * a.m[5]);
    inv.m[5] = -(inv.m[3] * a.m[2] + inv.m[4] * a.m[5]);
    return inv;
}

std::string region_name(Region r) {
    switch (r) {
    case Region::Face: return "face";
    case Region::Eyes: return "eyes";
    case Region::Mouth: return "mouth";
    }
    throw UsageError("region_name: bad region");
}

CropSpec default_crop(Region r, int side) {
    CropSpec spec;
    spec.region = r;
    spec.side = side;
    switch (r) {
    case Region::Face:
        spec.target1 = {0.05, 0.5};
        spec.target2 = {0.95, 0.5};
        break;
    case Region::Eyes:
        spec.target1 = {0.2, 0.6};
        spec.target2 = {0.8, 0.6};
        break;
    case Region::Mouth:
        spec.target1 = {0.25, 0.45};
        spec.target2 = {0.75, 0.45};
        break;
    }
    return spec;
}

std::array<Point, 2> crop_anchors(const LandmarkRecord& rec, const CropSpec& spec) {
    if (rec.face_count < 1)
        throw InputError("crop_anchors: frame " + std::to_string(rec.frame_index) +
                         " has no face");
    switch (spec.region) {
    case Region::Eyes:
        return {rec.left_eye, rec.right_eye};
    case Region::Mouth:
        return {rec.left_mouth, rec.right_mouth};
    case Region::Face: {
        // Midline endpoints of the margin-expanded detection box, rotated to
        // the eye line, so the crop is both centered on the box and aligned.
        if (rec.box_w <= 0.0 || rec.box_h <= 0.0)
            throw GeometryError("crop_anchors: degenerate detection box on frame " +
                                std::to_string(rec.frame_index));
        const Point center{rec.box_x + rec.box_w / 2.0, rec.box_y + rec.box_h / 2.0};
        const double half = rec.box_w * (1.0 + spec.box_margin) / 2.0;
        const double angle = alignment_angle(rec.left_eye, rec.right_eye);
        return {rotate_about({center.x - half, center.y}, center, angle),
                rotate_about({center.x + half, center.y}, center, angle)};
    }
    }
    throw UsageError("crop_anchors: bad region");
}

Affine crop_transform(const LandmarkRecord& rec, const CropSpec& spec) {
    if (spec.side < 1)
        throw ConfigError("crop_transform: side must be >= 1");
    for (const Point& t : {spec.target1, spec.target2})
        if (t.x <= 0.0 || t.x >= 1.0 || t.y <= 0.0 || t.y >= 1.0)
            throw ConfigError("crop_transform: targets must lie inside (0,1)^2");

    const auto anchors = crop_anchors(rec, spec);
    const std::complex<double> p1(anchors[0].x, anchors[0].y);
    const std::complex<double> p2(anchors[1].x, anchors[1].y);
    if (p1 == p2)
        throw GeometryError("crop_transform: coincident anchors on frame " +
                            std::to_string(rec.frame_index));
    const double s = static_cast<double>(spec.side);
    const std::complex<double> t1(spec.target1.x * s, spec.target1.y * s);
    const std::complex<double> t2(spec.target2.x * s, spec.target2.y * s);

    // z -> a z + b is the unique orientation-preserving similarity through
    // two point pairs.
    const std::complex<double> a = (t2 - t1) / (p2 - p1);
    const std::complex<double> b = t1 - a * p1;

    Affine out;
    out.m = {a.real(), -a.imag(), b.real(), a.imag(), a.real(), b.imag()};
    return out;
}

bool operator==(const ClipSpan& a, const ClipSpan& b) {
    return a.start == b.start && a.length == b.length;
}

std::vector<ClipSpan> validate_clips(const std::vector<LandmarkRecord>& records,
                                     const ClipRule& rule, double frame_width,
                                     double frame_height, bool fixed_length) {
    if (rule.min_frames < 1)
        throw ConfigError("validate_clips: min_frames must be >= 1");
    if (rule.area_fraction <= 0.0 || rule.area_fraction >= 1.0)
        throw ConfigError("validate_clips: area_fraction must be in (0,1)");
    if (frame_width <= 0.0 || frame_height <= 0.0)
        throw InputError("validate_clips: frame dimensions must be positive");
    for (size_t i = 1; i < records.size(); ++i)
        if (records[i].frame_index != records[i - 1].frame_index + 1)
            throw InputError("validate_clips: records must be consecutive; gap after frame " +
                             std::to_string(records[i - 1].frame_index));

    const double frame_area = frame_width * frame_height;
    std::vector<ClipSpan> spans;
    size_t i = 0;
    while (i < records.size()) {
        if (records[i].face_count != 1) {
            ++i;
            continue;
        }
        size_t j = i;
        long above = 0;
        while (j < records.size() && records[j].face_count == 1) {
            const double area = std::max(0.0, records[j].box_w) * std::max(0.0, records[j].box_h);
            if (area >= rule.area_fraction * frame_area)
                ++above;
            ++j;
        }
        const long run = static_cast<long>(j - i);
        if (run >= rule.min_frames && 2 * above > run)
            spans.push_back({records[i].frame_index, fixed_length ? rule.min_frames : run});
        i = j;
    }
    return spans;
}

namespace {

double bilinear(const FrameImage& frame, double sx, double sy, int channel) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - std::floor(sx);
    const double fy = sy - std::floor(sy);
    auto at = [&](int x, int y) {
        x = std::clamp(x, 0, frame.width - 1);
        y = std::clamp(y, 0, frame.height - 1);
        return frame.rgb[static_cast<size_t>((y * frame.width + x) * 3 + channel)];
    };
    const double top = (1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
    const double bot = (1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
    return (1.0 - fy) * top + fy * bot;
}

} // namespace

Tensor build_region_stack(const FrameImage& frame, const LandmarkRecord& rec,
                          const std::array<CropSpec, 3>& specs) {
    if (frame.width < 1 || frame.height < 1 ||
        frame.rgb.size() != static_cast<size_t>(frame.width) * frame.height * 3)
        throw InputError("build_region_stack: malformed frame image");
    const int side = specs[0].side;
    for (const auto& spec : specs)
        if (spec.side != side)
            throw ConfigError("build_region_stack: all crops must share one side");

    std::vector<double> out(static_cast<size_t>(9) * side * side, 0.0);
    for (size_t r = 0; r < 3; ++r) {
        const Affine inv = affine_inverse(crop_transform(rec, specs[r]));
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const Point src =
                    inv.apply({static_cast<double>(x), static_cast<double>(y)});
                for (int c = 0; c < 3; ++c) {
                    const size_t idx =
                        (r * 3 + static_cast<size_t>(c)) * static_cast<size_t>(side) * side +
                        static_cast<size_t>(y) * side + static_cast<size_t>(x);
                    out[idx] = bilinear(frame, src.x, src.y, c);
                }
            }
    }
    return Tensor::from({9, side, side}, std::move(out));
}

Tensor build_region_stack(const FrameImage& frame, const LandmarkRecord& rec, int side) {
    return build_region_stack(frame, rec,
                              {default_crop(Region::Face, side), default_crop(Region::Eyes, side),
                               default_crop(Region::Mouth, side)});
}

std::vector<LandmarkRecord> parse_landmark_records(std::istream& in) {
    std::vector<LandmarkRecord> records;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream fields(line);
        LandmarkRecord rec;
        if (!(fields >> rec.frame_index >> rec.face_count))
            throw InputError("landmarks line " + std::to_string(line_no) +
                             ": expected frame_index and face_count");
        if (rec.face_count < 0)
            throw InputError("landmarks line " + std::to_string(line_no) +
                             ": negative face count");
        if (rec.face_count >= 1) {
            if (!(fields >> rec.box_x >> rec.box_y >> rec.box_w >> rec.box_h >>
                  rec.left_eye.x >> rec.left_eye.y >> rec.right_eye.x >> rec.right_eye.y >>
                  rec.nose.x >> rec.nose.y >> rec.left_mouth.x >> rec.left_mouth.y >>
                  rec.right_mouth.x >> rec.right_mouth.y))
                throw InputError("landmarks line " + std::to_string(line_no) +
                                 ": expected box and 10 landmark floats");
        }
        std::string extra;
        if (fields >> extra)
            throw InputError("landmarks line " + std::to_string(line_no) +
                             ": trailing fields");
        records.push_back(rec);
    }
    return records;
}

std::string format_landmark_record(const LandmarkRecord& rec) {
    std::ostringstream out;
    out.precision(17);
    out << rec.frame_index << ' ' << rec.face_count;
    if (rec.face_count >= 1) {
        out << ' ' << rec.box_x << ' ' << rec.box_y << ' ' << rec.box_w << ' ' << rec.box_h;
        for (const Point& p : {rec.left_eye, rec.right_eye, rec.nose, rec.left_mouth,
                               rec.right_mouth})
            out << ' ' << p.x << ' ' << p.y;
    }
    return out.str();
}

} // namespace emovid
