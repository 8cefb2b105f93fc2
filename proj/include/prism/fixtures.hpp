#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/dataset.hpp"

namespace prism {

/// Block rotation acting on consecutive channel pairs (0,1), (2,3), ...; an odd
/// trailing channel is left alone.
inline Matrix pairwise_rotation(int channels, double angle) {
  Matrix r = Matrix::Identity(channels, channels);
  for (int c = 0; c + 1 < channels; c += 2) {
    r(c, c) = std::cos(angle);
    r(c, c + 1) = -std::sin(angle);
    r(c + 1, c) = std::sin(angle);
    r(c + 1, c + 1) = std::cos(angle);
  }
  return r;
}

/// Class c oscillates at 1 + c cycles per window.
inline std::vector<ClassMotif> default_motifs(int num_classes) {
  std::vector<ClassMotif> m;
  for (int c = 0; c < num_classes; ++c) m.push_back({1.0 + c, 0.5 * c, 1.0});
  return m;
}

struct FixtureOptions {
  int domains = 4;
  int per_cell = 150;  // samples per (domain, class)
  int window_len = 64;
  int channels = 6;
  int num_classes = 4;
  double shift = 1.0;         // scales every inter-domain difference; 0 = identical domains
  double bias = 8.0;          // channel offset magnitude at shift 1
  double noise = 1.0;
  bool relabel = true;        // domain d shows class c with the motif of class (c + d) mod K
  std::uint64_t seed = 0;
  std::string name = "fixture";
};

/// Domain d: channels rotated by shift*d*pi/4, offset +bias on channel d mod C
/// and -bias on channel (d + C/2) mod C (both scaled by shift), amplitude
/// 1 + 0.1*d*shift, and optionally a cyclic relabelling of the motifs.
inline std::vector<SynthDomainSpec> shifted_domain_specs(const FixtureOptions& o) {
  std::vector<SynthDomainSpec> specs;
  const auto base = default_motifs(o.num_classes);
  for (int d = 0; d < o.domains; ++d) {
    SynthDomainSpec s;
    s.domain_id = d;
    s.channel_mix = pairwise_rotation(o.channels, o.shift * d * 0.7853981633974483);
    s.channel_bias = Vector::Zero(o.channels);
    if (d > 0 || o.domains == 1) {
      s.channel_bias(d % o.channels) += o.shift * o.bias;
      s.channel_bias((d + o.channels / 2) % o.channels) -= o.shift * o.bias;
    }
    if (o.domains == 1) s.channel_bias.setZero();
    s.amplitude_scale = 1.0 + 0.1 * d * o.shift;
    s.noise_sigma = o.noise;
    for (int c = 0; c < o.num_classes; ++c)
      s.class_motifs.push_back(base[static_cast<std::size_t>(o.relabel ? (c + d) % o.num_classes : c)]);
    specs.push_back(std::move(s));
  }
  return specs;
}

inline Dataset make_fixture(const FixtureOptions& o) {
  return generate_synthetic(shifted_domain_specs(o), o.per_cell, o.window_len, o.channels, o.num_classes, o.seed, o.name);
}

/// The standard four-domain fixture: strongly shifted, relabelled domains.
inline Dataset four_domain_fixture(std::uint64_t seed, int per_cell = 150) {
  FixtureOptions o;
  o.seed = seed;
  o.per_cell = per_cell;
  o.name = "four-domain";
  return make_fixture(o);
}

/// One domain, same motifs and noise as the four-domain fixture.
inline Dataset single_domain_fixture(std::uint64_t seed, int per_cell = 600) {
  FixtureOptions o;
  o.domains = 1;
  o.seed = seed;
  o.per_cell = per_cell;
  o.name = "single-domain";
  return make_fixture(o);
}

inline Dataset two_domain_fixture(std::uint64_t seed, int per_cell = 150) {
  FixtureOptions o;
  o.domains = 2;
  o.seed = seed;
  o.per_cell = per_cell;
  o.name = "two-domain";
  return make_fixture(o);
}

}  // namespace prism
