#pragma once

#include "emovid/tensor.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace emovid {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// One face-detection record for one frame. Box and landmarks describe the
// primary face and are meaningful only when face_count >= 1. Image
// coordinates: x right, y down, pixels.
struct LandmarkRecord {
    long frame_index = 0;
    int face_count = 0;
    double box_x = 0.0, box_y = 0.0, box_w = 0.0, box_h = 0.0;
    Point left_eye, right_eye, nose, left_mouth, right_mouth;
};

// Angle of the eye line against the horizontal; rotating by the negative
// angle about the eye midpoint levels the eyes with the left eye on the left.
double alignment_angle(Point left_eye, Point right_eye);

Point rotate_about(Point p, Point center, double angle);

// Row-major 2x3 affine: (x, y) -> (m[0]x + m[1]y + m[2], m[3]x + m[4]y + m[5]).
struct Affine {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};
    Point apply(Point p) const {
        return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
    }
};

Affine affine_inverse(const Affine& a);

enum class Region { Face, Eyes, Mouth };

std::string region_name(Region r);

// Two-anchor similarity crop: the region's anchor points land on
// target1/target2 (normalized, scaled by side). The face region anchors on
// the midline of the detection box expanded by box_margin and rotated to the
// eye line; eyes and mouth anchor on their landmark pairs.
struct CropSpec {
    Region region = Region::Eyes;
    Point target1{0.2, 0.6};
    Point target2{0.8, 0.6};
    int side = 224;
    double box_margin = 0.10; // face region only
};

CropSpec default_crop(Region r, int side = 224);

// The two source-image anchor points the similarity is pinned to.
std::array<Point, 2> crop_anchors(const LandmarkRecord& rec, const CropSpec& spec);

// Similarity (rotation + uniform scale + translation) mapping the anchors
// exactly onto target1 * side and target2 * side.
Affine crop_transform(const LandmarkRecord& rec, const CropSpec& spec);

struct ClipRule {
    int min_frames = 30;        // f
    double area_fraction = 0.2; // tau, of the whole frame area
};

struct ClipSpan {
    long start = 0;  // frame index of the first record in the span
    long length = 0; // number of frames
};

bool operator==(const ClipSpan& a, const ClipSpan& b);

// Maximal runs of consecutive single-face frames, at least min_frames long,
// in which strictly more than half the frames have box area >= area_fraction
// of the frame area. With fixed_length, each span is truncated to min_frames.
std::vector<ClipSpan> validate_clips(const std::vector<LandmarkRecord>& records,
                                     const ClipRule& rule, double frame_width,
                                     double frame_height, bool fixed_length = false);

// Interleaved RGB image, (y * width + x) * 3 + channel, values in [0,1].
struct FrameImage {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;
};

// 9 x S x S stack: bilinear, edge-padded crops in face, eyes, mouth order,
// RGB within each region. All three specs must share one side.
Tensor build_region_stack(const FrameImage& frame, const LandmarkRecord& rec,
                          const std::array<CropSpec, 3>& specs);

Tensor build_region_stack(const FrameImage& frame, const LandmarkRecord& rec, int side = 224);

// Line format: "frame_index face_count [x y w h lx ly rx ry nx ny lmx lmy rmx rmy]";
// the bracketed fields appear iff face_count >= 1. '#' starts a comment line.
std::vector<LandmarkRecord> parse_landmark_records(std::istream& in);
std::string format_landmark_record(const LandmarkRecord& rec);

} // namespace emovid
