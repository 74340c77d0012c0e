#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace empathy {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input text could not be parsed (bad header, bad record).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input parsed but violates a data-model invariant.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Caller passed arguments that break an operation's precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A metric has no defined value for the given input (e.g. zero n-grams).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// A rank correlation is undefined (constant input, too few samples).
class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class ProviderError : public Error {
public:
    enum class Kind { Auth, RateLimit, Transport, Malformed, CacheMiss, Budget, Other };

    ProviderError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }
    bool retriable() const noexcept {
        return kind_ == Kind::RateLimit || kind_ == Kind::Transport;
    }

private:
    Kind kind_;
};

/// Commonsense inference failed for one or more relations.
class KnowledgeError : public Error {
public:
    KnowledgeError(const std::string& what, std::vector<std::string> failed)
        : Error(what), failed_relations(std::move(failed)) {}
    std::vector<std::string> failed_relations;
};

/// Index build could not embed some training dialogues.
class PartialBuildError : public Error {
public:
    PartialBuildError(const std::string& what, std::vector<std::string> ids)
        : Error(what), failed_ids(std::move(ids)) {}
    std::vector<std::string> failed_ids;
};

/// The first stage of two-stage generation produced nothing usable.
class StageOneError : public Error {
public:
    using Error::Error;
};

/// The judge reply contained no recognizable verdict, even after a reprompt.
class JudgeParseError : public Error {
public:
    using Error::Error;
};

}  // namespace empathy
