#pragma once

#include <random>
#include <string>

#include "cardioseq/volume.hpp"

namespace cardioseq {

enum class Augmentation { identity, scale_down, scale_up, flip_x, flip_y };

std::string to_string(Augmentation a);

/// In-plane zoom factor for the scaling variants (0.8 and 1.2), 1 otherwise.
double scale_factor(Augmentation a);

/// Uniform draw over the five variants.
Augmentation draw_augmentation(std::mt19937_64& rng);

/// Applies one transform to every frame and label of the sequence. Scaling
/// zooms each slice about the in-plane center and keeps the extents; images
/// are bilinear with border clamping, labels nearest with background fill.
/// flip_x mirrors the width axis, flip_y the height axis.
SequenceSample apply_augmentation(const SequenceSample& sample, Augmentation a);

/// Draws a transform from `rng` and applies it.
SequenceSample augment(const SequenceSample& sample, std::mt19937_64& rng);

Volume scale_in_plane(const Volume& volume, double factor);
LabelVolume scale_in_plane(const LabelVolume& labels, double factor);
Volume flip(const Volume& volume, Augmentation axis);
LabelVolume flip(const LabelVolume& labels, Augmentation axis);

}  // namespace cardioseq
