"""NSE metrics, plot-ready exports and model inspection."""
