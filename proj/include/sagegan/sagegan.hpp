#pragma once

// Umbrella header: the full two-phase segmentation stack.

#include "sagegan/attention_unet.hpp"
#include "sagegan/checkpoint.hpp"
#include "sagegan/config.hpp"
#include "sagegan/data_pipeline.hpp"
#include "sagegan/discriminator.hpp"
#include "sagegan/error.hpp"
#include "sagegan/graph.hpp"
#include "sagegan/losses.hpp"
#include "sagegan/metrics.hpp"
#include "sagegan/nn_ops.hpp"
#include "sagegan/optim.hpp"
#include "sagegan/png_io.hpp"
#include "sagegan/rng.hpp"
#include "sagegan/style_generator.hpp"
#include "sagegan/tensor.hpp"
#include "sagegan/trainer.hpp"
#include "sagegan/viz.hpp"
