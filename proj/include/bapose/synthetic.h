#pragma once

#include <utility>
#include <vector>

#include "bapose/pose.h"
#include "bapose/random.h"
#include "bapose/train.h"

namespace bapose {

// Star-shaped people: K joints spread around a centre at radius
// [min_radius, max_radius], randomly rotated, jittered and kept inside the
// canvas with `margin` pixels to spare.
struct PeopleParams {
  int width = 64;
  int height = 64;
  int min_people = 1;
  int max_people = 4;
  int keypoints = 5;
  double min_center_distance = 8;
  double min_radius = 3;
  double max_radius = 6;
  double margin = 1;
  double unlabeled_fraction = 0;  // chance a joint is left unlabeled
};

// Throws NumericError if the people cannot be placed after many attempts.
std::vector<PersonAnnotation> synthetic_people(Rng& rng,
                                               const PeopleParams& p);

// Limbs of the star: every joint linked to the next one around the centre.
std::vector<std::pair<int, int>> synthetic_skeleton(int keypoints);

// Renders people onto a dark canvas: limbs as thin grey lines and each joint
// as a disc coloured by its index.
Tensor draw_people(const std::vector<PersonAnnotation>& people, int width,
                   int height);

// Draws a pose overlay (markers and limbs) onto a copy of the image.
Tensor draw_overlay(const Tensor& image, const std::vector<PoseInstance>& poses,
                    const std::vector<std::pair<int, int>>& skeleton,
                    double min_score = 0.0);

// The toy training set: `count` images with people drawn on them.
std::vector<TrainSample> synthetic_dataset(Rng& rng, int count,
                                           const PeopleParams& p);

}  // namespace bapose
