#pragma once

namespace l0control {

struct SolverSettings;

}  // namespace l0control
