//! Shared inputs for unit tests.

pub const IMMUNOTHERAPY_XML: &str = r#"<problem>
  <multiplechoiceresponse>
    <label>Which of the therapies listed below involves administration of antibodies to activate T cells?</label>
    <choicegroup type="MultipleChoice">
      <choice correct="false">tumor vaccination with neoantigens</choice>
      <choice correct="false">vectored immunoprophylaxis</choice>
      <choice correct="true">checkpoint blockade</choice>
      <choice correct="false">CAR T cell therapy</choice>
    </choicegroup>
  </multiplechoiceresponse>
  <solution>
    <div class="detailed-solution">
      <p>Current checkpoint blockade therapies are monoclonal antibodies. By blocking inhibitory receptors or their ligands, they permit the re-activation of tumor-specific cytotoxic T lymphocytes.</p>
    </div>
  </solution>
</problem>"#;
