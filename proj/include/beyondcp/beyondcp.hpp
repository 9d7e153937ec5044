#ifndef BEYONDCP_BEYONDCP_HPP
#define BEYONDCP_BEYONDCP_HPP

#include "beyondcp/analytics.hpp"
#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/esprit.hpp"
#include "beyondcp/experiment.hpp"
#include "beyondcp/fft.hpp"
#include "beyondcp/io.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/rdm.hpp"
#include "beyondcp/sic.hpp"
#include "beyondcp/waveform.hpp"

#endif  // BEYONDCP_BEYONDCP_HPP
