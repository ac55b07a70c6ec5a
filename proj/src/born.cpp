#include "wavetomo/born.hpp"

#include <stdexcept>

#include "wavetomo/grid.hpp"

namespace wavetomo {

BornOperator::BornOperator(const ImagingSystem& sys) : sys_(sys) {
  const Grid& g = sys_.params.grid;
  Image water(g.n_full, g.n_full);
  water.fill(kWaterSos);
  water_ = std::make_unique<WaveSolver>(water, g, sys_.receiver_cells);
  fov_ = water_->fov_rect();
  dscale_ = (kWaterSos * g.dt) * (kWaterSos * g.dt);

  SimOptions opt;
  opt.record_drive = true;
  incident_.reserve(sys_.source_cells.size());
  background_.reserve(sys_.source_cells.size());
  for (size_t i = 0; i < sys_.source_cells.size(); ++i) {
    SimResult r = water_->simulate(sys_.source_term(static_cast<int>(i)), opt);
    incident_.push_back(std::move(r.drive));
    background_.push_back(std::move(r.traces));
  }
}

TraceSet BornOperator::apply_movie(const Array3D<float>& movie, const Image& x) const {
  if (x.rows != fov_.h || x.cols != fov_.w) {
    throw std::invalid_argument("born: contrast image does not match the field of view");
  }
  MovieSource src;
  src.movie = &movie;
  src.rect = fov_;
  src.scale = x.data.data();
  return water_->simulate(src).traces;
}

Image BornOperator::adjoint_movie_sum(const Array3D<float>& movie, const TraceSet& y) const {
  std::vector<double> s = water_->adjoint_weighted_sum(y, movie, fov_);
  Image out(fov_.h, fov_.w);
  for (size_t i = 0; i < s.size(); ++i) out.data[i] = dscale_ * s[i];
  return out;
}

TraceSet BornOperator::apply(int i, const Image& x) const { return apply_movie(incident_[i], x); }

Image BornOperator::adjoint(int i, const TraceSet& y) const {
  return adjoint_movie_sum(incident_[i], y);
}

Array3D<float> BornOperator::combine_incident(const std::vector<double>& w) const {
  if (w.size() != incident_.size()) {
    throw std::invalid_argument("born: weight count does not match sources");
  }
  Array3D<float> mix(incident_[0].n0, incident_[0].n1, incident_[0].n2);
  for (size_t i = 0; i < incident_.size(); ++i) {
    const float wi = static_cast<float>(w[i]);
    if (wi == 0.0f) continue;
    const float* src = incident_[i].data.data();
    float* dst = mix.data.data();
    for (size_t s = 0; s < mix.data.size(); ++s) dst[s] += wi * src[s];
  }
  return mix;
}

TraceSet BornOperator::apply_encoded(const std::vector<double>& w, const Image& x) const {
  return apply_movie(combine_incident(w), x);
}

Image BornOperator::adjoint_encoded(const std::vector<double>& w, const TraceSet& y) const {
  return adjoint_movie_sum(combine_incident(w), y);
}

TraceSet BornOperator::encoded_background(const std::vector<double>& w) const {
  if (w.size() != background_.size()) {
    throw std::invalid_argument("born: weight count does not match sources");
  }
  return encode_traces(background_, w);
}

Image BornOperator::normal_apply(const Image& x) const {
  Image acc(fov_.h, fov_.w);
  for (int i = 0; i < n_sources(); ++i) {
    Image gi = adjoint(i, apply(i, x));
    for (size_t s = 0; s < acc.data.size(); ++s) acc.data[s] += gi.data[s];
  }
  return acc;
}

}  // namespace wavetomo
