#ifndef MVIS_ERROR_HPP_
#define MVIS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mvis {

/// Data or runtime failure raised by any toolkit operation.
class Error : public std::runtime_error {
public:
	explicit Error(const std::string& what) : std::runtime_error(what) { }
};

} // namespace mvis

#endif // MVIS_ERROR_HPP_
