#pragma once

#include "architecture.hpp"
#include "attention.hpp"
#include "checkpoint.hpp"
#include "colorspace.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "dataset.hpp"
#include "energy.hpp"
#include "image_io.hpp"
#include "layers.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "neuron.hpp"
#include "ops.hpp"
#include "params.hpp"
#include "tape.hpp"
#include "tensor.hpp"
#include "training.hpp"
