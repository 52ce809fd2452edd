#ifndef PHOTON_ATOM_PHOTON_ATOM_HPP
#define PHOTON_ATOM_PHOTON_ATOM_HPP

#include <photon_atom/errors.hpp>
#include <photon_atom/grid.hpp>
#include <photon_atom/fft.hpp>
#include <photon_atom/csv.hpp>
#include <photon_atom/envelopes.hpp>
#include <photon_atom/dynamics.hpp>
#include <photon_atom/cavity.hpp>
#include <photon_atom/histogram.hpp>
#include <photon_atom/synthesis.hpp>
#include <photon_atom/reconstruction.hpp>
#include <photon_atom/estimation.hpp>
#include <photon_atom/pipeline.hpp>

#endif
