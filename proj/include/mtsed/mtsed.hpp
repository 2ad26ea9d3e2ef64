#pragma once

#include "mtsed/error.hpp"
#include "mtsed/projection.hpp"
#include "mtsed/network.hpp"
#include "mtsed/problem.hpp"
#include "mtsed/dynamics.hpp"
#include "mtsed/qp.hpp"
#include "mtsed/verify.hpp"
#include "mtsed/simulator.hpp"
#include "mtsed/io.hpp"
