#pragma once

#include <activereg/batch.hpp>
#include <activereg/csv.hpp>
#include <activereg/design.hpp>
#include <activereg/error.hpp>
#include <activereg/estimator.hpp>
#include <activereg/iterative.hpp>
#include <activereg/linalg.hpp>
#include <activereg/parallel.hpp>
#include <activereg/penalties.hpp>
#include <activereg/rng.hpp>
#include <activereg/scenario.hpp>
#include <activereg/validation.hpp>
