export {
  CDF_TOTAL,
  CdfError,
  PRECISION,
  idealLengthBits,
  symbolFromCumulative,
  validateCdf,
} from "./cdf.js";
export type { CdfTable } from "./cdf.js";
export {
  CorruptStreamError,
  RangeDecoder,
  RangeEncoder,
  decodeSymbols,
  encodeSymbols,
  measuredLengthBits,
} from "./rangecoder.js";
