#pragma once

#include <string>
#include <vector>

#include "c2d/grid.hpp"
#include "c2d/pseudo.hpp"

namespace c2d {

// Full evaluation summary. "mse" follows the counting literature: it is the
// root of the mean squared error, not the plain mean. psnr is +inf for
// identical maps.
struct EvalReport {
    double mae = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
    double subregion_mae = 0.0;
    double subregion_mse = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int n_images = 0;

    std::string to_json() const;
    std::string to_table() const;
};

// MAE = mean |y - y_hat|; MSE = sqrt(mean (y - y_hat)^2). Throws ParamError
// on empty or mismatched lists.
std::pair<double, double> counting_errors(const std::vector<double>& pred_counts,
                                          const std::vector<double>& gt_counts);

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, C1=0.01^2, C2=0.03^2 on
// the [0,1] range after rescaling both maps by their shared maximum.
double ssim(const Grid2D& a, const Grid2D& b);

// 10*log10(1/MSE_pixel) after shared-max rescale to [0,1]; +inf for
// identical maps.
double psnr(const Grid2D& a, const Grid2D& b);

// Partitions both maps into tile x tile subregions (edge tiles smaller),
// counts each via subregion_count, and applies counting_errors over the
// tile pairs.
std::pair<double, double> subregion_eval(const Grid2D& pred, const Grid2D& gt, int tile);

// Density peaks: strict maxima of the (2r+1)^2 neighborhood above
// min_density, greedily suppressed in descending value order within
// nms_radius. Returned in descending confidence order.
PointSet localize(const Grid2D& pred, double min_density, int nms_radius);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Greedy one-to-one matching: detections (in the given order) claim the
// nearest unclaimed gt point within match_radius. Empty-denominator cases
// are 0; both sets empty gives f1 = 1.
Prf localization_prf(const PointSet& detected, const PointSet& gt, double match_radius);

} // namespace c2d
