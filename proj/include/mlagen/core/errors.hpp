#pragma once

#include <stdexcept>
#include <string>

namespace mlagen {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    ok = 0,
    failure = 1,
    validation = 2,
    dependency = 3,
    numeric = 4,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ExitCode code = ExitCode::failure)
        : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

#define MLAGEN_DEFINE_ERROR(Name, Code)                                      \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(what, Code) {}        \
    }

MLAGEN_DEFINE_ERROR(ConfigError, ExitCode::validation);
MLAGEN_DEFINE_ERROR(DependencyError, ExitCode::dependency);
MLAGEN_DEFINE_ERROR(NumericError, ExitCode::numeric);
MLAGEN_DEFINE_ERROR(ShapeError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(GraphError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(MaskedRowError, ExitCode::numeric);
MLAGEN_DEFINE_ERROR(OptimizerError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(DataError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(GenerationError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(TokenizationError, ExitCode::validation);
MLAGEN_DEFINE_ERROR(StateError, ExitCode::dependency);
MLAGEN_DEFINE_ERROR(DomainError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(TrainingError, ExitCode::numeric);
MLAGEN_DEFINE_ERROR(SamplingError, ExitCode::numeric);
MLAGEN_DEFINE_ERROR(ProtocolError, ExitCode::failure);
MLAGEN_DEFINE_ERROR(EvaluatorQualityError, ExitCode::numeric);
MLAGEN_DEFINE_ERROR(FormatError, ExitCode::failure);

#undef MLAGEN_DEFINE_ERROR

}  // namespace mlagen
