#pragma once

#include <array>
#include <string>
#include <vector>

#include "mirrorfill/autograd.hpp"
#include "mirrorfill/geometry.hpp"
#include "mirrorfill/networks.hpp"

namespace mirrorfill {

struct LossWeights {
    double lambda_r2 = 300.0;
    double lambda_rp = 0.01;
    double lambda_ag = 100.0;
    std::array<double, 4> lambda_ap = {100.0, 100.0, 80.0, 80.0};
    double lambda_s = 50.0;
    double lambda_l = 100.0;
    double lambda_lm = 10.0;
    double lambda_tv = 1.0;

    /// Throws ValidationError on a negative or non-finite weight.
    void validate() const;
};

/// Mean squared pixel distance between the flow evaluated at the image
/// landmarks `lm` and their positions in the flipped image `lm_flip`
/// (as produced by flip_landmarks).
template <typename T>
Var<T> landmark_loss(const Var<T>& flow, const LandmarkSet& lm, const LandmarkSet& lm_flip);

/// Mean of squared forward differences of both flow channels in pixel units;
/// differences across the last row/column are zero. The mean runs over
/// 2 directions x 2 channels x H x W.
template <typename T>
Var<T> tv_loss(const Var<T>& flow);

/// mean(((feat - warp(feat_flip, flow_ds)) * s2_ds)^2) over C x h x w.
template <typename T>
Var<T> perceptual_symmetry_loss(const Var<T>& feat, const Var<T>& feat_flip, const Var<T>& flow_ds,
                                const Var<T>& s2_ds);

template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Var<T>& gt);

/// Mean squared difference of the extractor's features (its Tap layer if it
/// has one, otherwise its output).
template <typename T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& gt, const Network<T>& extractor);

template <typename T>
Var<T> reconstruction_loss(const Var<T>& pred, const Var<T>& gt, const Network<T>& extractor, const LossWeights& w);

template <typename T>
struct AdversarialPair {
    Var<T> d_loss;
    Var<T> g_loss;
};

/// d_loss = (BCE(real, 1) + BCE(fake, 0)) / 2; g_loss = BCE(fake, 1).
/// Throws NumericError on probabilities outside [0, 1].
template <typename T>
AdversarialPair<T> adversarial_losses(const Var<T>& real, const Var<T>& fake);

template <typename T>
Var<T> discriminator_loss(const Var<T>& real, const Var<T>& fake);

template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& fake);

/// lambda_ag * global + sum_i lambda_ap[i] * parts[i].
template <typename T>
Var<T> combine_adversarial(const Var<T>& global, const std::array<Var<T>, 4>& parts, const LossWeights& w);

/// Terms of the objective; an undefined Var counts as an absent (zero) term.
/// `rec` and `adv` are already weighted.
template <typename T>
struct LossTerms {
    Var<T> rec;
    Var<T> adv;
    Var<T> sym;
    Var<T> illum;
    Var<T> landmark;
    Var<T> tv;
};

struct LossReport {
    long step = 0;
    int stage = 0;
    double rec = 0.0;
    double adv = 0.0;
    double sym = 0.0;
    double illum = 0.0;
    double landmark = 0.0;
    double tv = 0.0;
    double disc = 0.0;
    double total = 0.0;
};

template <typename T>
struct Objective {
    Var<T> total;
    LossReport report;
};

/// rec + adv + lambda_s*sym + lambda_l*illum + lambda_lm*landmark + lambda_tv*tv.
template <typename T>
Objective<T> total_loss(const LossTerms<T>& terms, const LossWeights& w);

std::string loss_csv_header();
std::string loss_csv_row(const LossReport& report);

}  // namespace mirrorfill
