export { parseStudyCsv, readStudyCsv, groupByParam, SchemaError, StudyRow } from "./csv";
export { fitRate, RateFit } from "./fit";
export { buildFigure, legendDump, FIGURE_KINDS, FigureKind, FigureData, Series } from "./scene";
export { renderFigure } from "./render";
export { renderOne, renderAll } from "./cli";
