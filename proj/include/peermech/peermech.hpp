#pragma once

#include <peermech/assignment.hpp>
#include <peermech/baselines.hpp>
#include <peermech/csv.hpp>
#include <peermech/dataset.hpp>
#include <peermech/errors.hpp>
#include <peermech/estimation.hpp>
#include <peermech/experiment.hpp>
#include <peermech/grades.hpp>
#include <peermech/mechanism.hpp>
#include <peermech/model.hpp>
#include <peermech/random.hpp>
#include <peermech/simulation.hpp>
