#ifndef MVIS_MVIS_HPP_
#define MVIS_MVIS_HPP_

#include "mvis/corpus.hpp"
#include "mvis/data.hpp"
#include "mvis/evalmetrics.hpp"
#include "mvis/models.hpp"
#include "mvis/nn/kernels.hpp"
#include "mvis/nn/network.hpp"
#include "mvis/nn/sgd.hpp"
#include "mvis/png_io.hpp"
#include "mvis/strategy.hpp"
#include "mvis/train.hpp"
#include "mvis/visualize.hpp"

#endif // MVIS_MVIS_HPP_
