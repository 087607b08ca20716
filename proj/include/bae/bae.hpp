#ifndef BAE_BAE_HPP
#define BAE_BAE_HPP

#include "bae/matrix.hpp"
#include "bae/rng.hpp"
#include "bae/nn.hpp"
#include "bae/autoencoder.hpp"
#include "bae/serialize.hpp"
#include "bae/calibration.hpp"
#include "bae/uncertainty.hpp"
#include "bae/evaluation.hpp"
#include "bae/data.hpp"
#include "bae/experiment.hpp"

#endif  // BAE_BAE_HPP
