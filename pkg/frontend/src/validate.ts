/** Client-side validation of edited stage outputs, run before anything is
 *  sent to the service so malformed edits fail inline with no request. */

const INTENTS = new Set(['Inform', 'Request', 'Recommend', 'NoOffer', 'Greet', 'Bye'])

export interface ValidationResult {
  ok: boolean
  error?: string
  value?: unknown
}

function bad(error: string): ValidationResult {
  return { ok: false, error }
}

export function parseEditorText(stage: string, text: string): ValidationResult {
  if (stage === 'nlg') {
    // the response panel is edited as plain text, quoted or not
    const trimmed = text.trim()
    if (!trimmed) return bad('the response must not be empty')
    if (trimmed.startsWith('"')) {
      try {
        const value = JSON.parse(trimmed)
        if (typeof value !== 'string') return bad('the response must be a string')
        return { ok: true, value }
      } catch (error) {
        return bad(`not valid JSON: ${(error as Error).message}`)
      }
    }
    return { ok: true, value: trimmed }
  }

  let parsed: unknown
  try {
    parsed = JSON.parse(text)
  } catch (error) {
    return bad(`not valid JSON: ${(error as Error).message}`)
  }
  if (stage === 'nlu' || stage === 'policy') return validateActs(parsed)
  if (stage === 'dst') return validateBelief(parsed)
  return bad(`unknown stage ${stage}`)
}

export function validateActs(value: unknown): ValidationResult {
  if (!Array.isArray(value)) return bad('expected an array of dialogue acts')
  for (let i = 0; i < value.length; i++) {
    const act = value[i]
    let parts: string[]
    if (typeof act === 'string') {
      parts = act.split('-')
      if (parts.length < 2) return bad(`act ${i}: need at least Intent-Domain`)
      if (parts.length > 4) {
        // values may contain anything except "-", so more than four
        // segments means a reserved character slipped in
        return bad(`act ${i}: too many "-" segments`)
      }
    } else if (Array.isArray(act) && act.length === 4 && act.every((p) => typeof p === 'string')) {
      parts = act as string[]
    } else {
      return bad(`act ${i}: expected "Intent-Domain-Slot-Value" or a 4-element array`)
    }
    const [intent, , slot, actValue] = [parts[0], parts[1], parts[2] ?? 'none', parts[3] ?? 'none']
    if (!INTENTS.has(intent)) return bad(`act ${i}: unknown intent "${intent}"`)
    if (intent === 'Request' && actValue !== '?') return bad(`act ${i}: requests carry the value "?"`)
    if ((intent === 'Greet' || intent === 'Bye') && (slot !== 'none' || actValue !== 'none')) {
      return bad(`act ${i}: ${intent} acts carry no slot or value`)
    }
  }
  return { ok: true, value }
}

export function validateBelief(value: unknown): ValidationResult {
  if (typeof value !== 'object' || value === null || Array.isArray(value)) {
    return bad('expected a belief state object')
  }
  const belief = value as Record<string, unknown>
  if (!('domains' in belief)) return bad('belief state needs a "domains" object')
  if (belief.active_domain !== null && typeof belief.active_domain !== 'string') {
    return bad('"active_domain" must be a string or null')
  }
  const domains = belief.domains
  if (typeof domains !== 'object' || domains === null || Array.isArray(domains)) {
    return bad('"domains" must be an object')
  }
  for (const [domain, raw] of Object.entries(domains as Record<string, unknown>)) {
    if (typeof raw !== 'object' || raw === null) return bad(`domain "${domain}" must be an object`)
    const record = raw as Record<string, unknown>
    const constraints = record.constraints ?? {}
    if (typeof constraints !== 'object' || constraints === null || Array.isArray(constraints)) {
      return bad(`"${domain}".constraints must map slots to values`)
    }
    for (const [slot, slotValue] of Object.entries(constraints as Record<string, unknown>)) {
      if (typeof slotValue !== 'string') return bad(`"${domain}".constraints.${slot} must be a string`)
    }
    const requested = record.requested ?? []
    if (!Array.isArray(requested) || requested.some((s) => typeof s !== 'string')) {
      return bad(`"${domain}".requested must be a list of slot names`)
    }
  }
  return { ok: true, value }
}
