#pragma once

#include "masktrack/mask.hpp"
#include "masktrack/rng.hpp"

namespace masktrack {

// Square structuring element of the given radius.
DenseMask dilate(const DenseMask& m, int radius);
DenseMask erode(const DenseMask& m, int radius);

// Integer translation, clipped at the canvas border.
DenseMask translate(const DenseMask& m, int dx, int dy);

// Clears `holes` discs centered on random set pixels.
DenseMask punch_holes(const DenseMask& m, int holes, int max_radius, Rng& rng);

// Toggles pixels inside the dilate(r) \ erode(r) band with probability `level`.
DenseMask boundary_jitter(const DenseMask& m, double level, int band_radius, Rng& rng);

// Adds (or removes) a disc centered on a random contour pixel.
DenseMask contour_blob(const DenseMask& m, int max_radius, bool add, Rng& rng);

// One random degradation drawn from the family
// {dilate, erode, hole punch, boundary jitter, shift, contour blob add/remove}.
// `strength` in (0, 1] scales the op parameters relative to the mask size.
DenseMask random_degradation(const DenseMask& m, double strength, Rng& rng);

}  // namespace masktrack
