import { describe, expect, it } from 'vitest'
import { parseEditorText, validateActs, validateBelief } from '../src/validate'

describe('act list validation', () => {
  it('accepts hyphen strings and 4-element arrays', () => {
    expect(validateActs(['Request-Hotel-Phone-?']).ok).toBe(true)
    expect(validateActs([['Inform', 'Hotel', 'Area', 'north']]).ok).toBe(true)
    expect(validateActs([]).ok).toBe(true)
  })

  it('rejects non-arrays and malformed acts', () => {
    expect(validateActs('Request-Hotel-Phone-?').ok).toBe(false)
    expect(validateActs([42]).ok).toBe(false)
    expect(validateActs(['Shout-Hotel-Phone-?']).error).toMatch(/unknown intent/)
    expect(validateActs(['Inform']).error).toMatch(/Intent-Domain/)
  })

  it('enforces request and greet/bye shapes', () => {
    expect(validateActs(['Request-Hotel-Phone-yes']).error).toMatch(/"\?"/)
    expect(validateActs(['Bye-none-Area-north']).error).toMatch(/no slot/)
    expect(validateActs(['Bye-none-none-none']).ok).toBe(true)
  })
})

describe('belief state validation', () => {
  it('accepts a well-formed belief state', () => {
    const result = validateBelief({
      active_domain: 'Hotel',
      domains: {
        Hotel: { constraints: { Area: 'north' }, requested: ['Phone'], recommended: false },
      },
    })
    expect(result.ok).toBe(true)
  })

  it('pinpoints structural problems', () => {
    expect(validateBelief([]).ok).toBe(false)
    expect(validateBelief({}).error).toMatch(/domains/)
    expect(validateBelief({ active_domain: 3, domains: {} }).error).toMatch(/active_domain/)
    expect(
      validateBelief({ active_domain: null, domains: { Hotel: { constraints: { Area: 1 } } } })
        .error,
    ).toMatch(/Hotel/)
    expect(
      validateBelief({ active_domain: null, domains: { Hotel: { requested: 'Phone' } } }).error,
    ).toMatch(/requested/)
  })
})

describe('editor text parsing', () => {
  it('parses JSON for act stages and reports syntax errors', () => {
    expect(parseEditorText('nlu', '["Request-Hotel-Phone-?"]').ok).toBe(true)
    expect(parseEditorText('nlu', '[oops').error).toMatch(/not valid JSON/)
    expect(parseEditorText('policy', '["Inform-Hotel-Area-north"]').ok).toBe(true)
  })

  it('treats the response panel as plain text, quoted or bare', () => {
    expect(parseEditorText('nlg', 'Hello there.').value).toBe('Hello there.')
    expect(parseEditorText('nlg', '"Hello there."').value).toBe('Hello there.')
    expect(parseEditorText('nlg', '   ').ok).toBe(false)
  })
})
