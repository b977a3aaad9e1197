#pragma once

#include "spasm/agreement.hpp"
#include "spasm/analytics.hpp"
#include "spasm/annotation_service.hpp"
#include "spasm/backend.hpp"
#include "spasm/commands.hpp"
#include "spasm/config.hpp"
#include "spasm/dialogue.hpp"
#include "spasm/drift.hpp"
#include "spasm/echo.hpp"
#include "spasm/error.hpp"
#include "spasm/hash.hpp"
#include "spasm/http_backend.hpp"
#include "spasm/mock_backend.hpp"
#include "spasm/orchestrator.hpp"
#include "spasm/parallel.hpp"
#include "spasm/persona.hpp"
#include "spasm/prompts.hpp"
#include "spasm/record.hpp"
#include "spasm/report.hpp"
#include "spasm/stats.hpp"
#include "spasm/store.hpp"
