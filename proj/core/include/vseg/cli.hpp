#pragma once

namespace vseg {

/// Command line entry point. Subcommands: gen-data, make-labels, train-init,
/// train-sdn, iterate, evaluate, experiment, report. Returns 0 on success, 2
/// on usage errors, 1 on runtime failures.
int dispatch(int argc, const char* const* argv);

}  // namespace vseg
