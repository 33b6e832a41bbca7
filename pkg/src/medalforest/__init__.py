"""Two-stage random forest forecasts of Olympic medal counts."""
